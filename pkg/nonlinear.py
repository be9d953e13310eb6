"""
Quadratic nonlinearity, weighted norms and the two nonlinear solvers.

picard_solve iterates u ↦ δ·L_k⁻¹𝒩_k(U^a + u, U^a + u) on a fixed time grid.
evolve_direct integrates the full system independently with Strang
splitting: exact 4×4 block propagators for the linear half steps and an
exact unitary substep for i∂ₜe = Π(n e).
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from dispersion import ClassificationError, block_propagator, build_A, build_block_matrix, eig4
from linear_solver import (
    Forcing,
    UnstableMode,
    apply_Lk_inverse,
    equation_time_derivative,
)
from spectral_core import (
    REALITY_TOL,
    FourierField,
    RealityDriftError,
    StateU,
    Trajectory,
    conjugate_coeffs,
    log_sobolev_norm_coeffs,
    product,
    product_coeffs,
    reality_drift,
    second_derivative_coeffs,
    second_theta_derivative,
    sobolev_norm_coeffs,
    symmetrize,
)

if TYPE_CHECKING:
    from schemas import ZakharovConfig

logger = logging.getLogger(__name__)


class NoConvergence(RuntimeError):
    """Picard iteration did not reach the tolerance."""

    def __init__(self, message: str, log: Optional[List[Dict]] = None):
        super().__init__(message)
        self.log = log or []


class BlowupDetected(RuntimeError):
    """A norm crossed the configured ceiling during direct integration."""

    def __init__(self, time: float, norm: float, partial: Optional[Trajectory] = None):
        super().__init__(f"Norm {norm:.6g} crossed the ceiling at t={time:.6g}")
        self.time = time
        self.norm = norm
        self.partial = partial


class ContractionWarning(RuntimeWarning):
    """δk^{-1/4}e^{σT} exceeds the contraction constant c₀."""


@dataclass(frozen=True)
class WeightedNorms:
    E1: float
    E2: float
    F2: float
    sigma: float
    k: int
    s: int

    def to_dict(self) -> Dict:
        return {"E1": self.E1, "E2": self.E2, "F2": self.F2, "sigma": self.sigma, "k": self.k, "s": self.s}


@dataclass
class PicardResult:
    u: Trajectory
    log: List[Dict] = field(default_factory=list)
    iterations: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def contraction_ratios(self) -> List[float]:
        return [entry["ratio"] for entry in self.log if entry["ratio"] is not None]


# ============================================================================
# BILINEAR FORM
# ============================================================================

def bilinear_N(U: StateU, V: StateU, k: int) -> Tuple[FourierField, FourierField]:
    """𝒩_k(U, V) = (½(n_U e_V + n_V e_U), k²∂²_θ Re(ē_U e_V)).

    𝒩_k(U, U) = (n e, k²∂²_θ|e|²) and the g component has zero mean.
    """
    f = 0.5 * (product(U.n, V.e) + product(V.n, U.e))
    overlap = product_coeffs(conjugate_coeffs(U.e.coeffs), V.e.coeffs)
    g = second_theta_derivative(FourierField(symmetrize(overlap), is_real=True)) * float(k * k)
    return f, _zero_mean(g)


def N_k(U: StateU, k: int) -> Tuple[FourierField, FourierField]:
    return bilinear_N(U, U, k)


def _zero_mean(g: FourierField) -> FourierField:
    coeffs = np.array(g.coeffs)
    coeffs[g.P] = 0.0
    return FourierField(coeffs, is_real=True)


def _time_derivative(traj: Trajectory) -> np.ndarray:
    if traj.e_t is not None:
        return traj.e_t
    return np.gradient(traj.e, traj.t, axis=0, edge_order=2)


def bilinear_forcing(U: Trajectory, V: Trajectory, k: int) -> Forcing:
    """𝒩_k applied at every sample, with the exact ∂ₜf from the product rule."""
    e_tU, e_tV = _time_derivative(U), _time_derivative(V)
    f = 0.5 * (product_coeffs(U.n, V.e) + product_coeffs(V.n, U.e))
    f_t = 0.5 * (
        product_coeffs(U.n_t, V.e) + product_coeffs(U.n, e_tV)
        + product_coeffs(V.n_t, U.e) + product_coeffs(V.n, e_tU)
    )
    overlap = symmetrize(product_coeffs(conjugate_coeffs(U.e), V.e))
    g = float(k * k) * second_derivative_coeffs(overlap)
    g[:, U.P] = 0.0
    return Forcing(U.t, f, g, f_t)


# ============================================================================
# WEIGHTED NORMS
# ============================================================================

def _split_first_harmonic(e: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(ê₁, e′) with e = ê₁e^{iθ} + e′."""
    P = (e.shape[-1] - 1) // 2
    rest = np.array(e)
    rest[..., P + 1] = 0.0
    return e[..., P + 1], rest


def _log_abs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def _discounted(log_terms: List[np.ndarray], rate: float, t: np.ndarray) -> np.ndarray:
    """e^{-rate·t}·Σ_j exp(log_terms[j]), summed in log space."""
    return np.exp(logsumexp(np.stack(log_terms), axis=0) - rate * t)


def e1_profile(traj: Trajectory, k: int, s: int, sigma: float) -> np.ndarray:
    """e^{-σt}{k^{1/2}|ê₁| + k^{-1/2}|∂ₜê₁| + k^{3/4}‖e′‖_{s+2} + k^{-1/2}‖∂ₜe′‖_s + ‖n‖_s + k^{-1}‖∂ₜn‖_s}."""
    e1, rest = _split_first_harmonic(traj.e)
    e1_t, rest_t = _split_first_harmonic(_time_derivative(traj))
    log_k = math.log(k)
    return _discounted(
        [
            0.5 * log_k + _log_abs(e1),
            -0.5 * log_k + _log_abs(e1_t),
            0.75 * log_k + log_sobolev_norm_coeffs(rest, s + 2),
            -0.5 * log_k + log_sobolev_norm_coeffs(rest_t, s),
            log_sobolev_norm_coeffs(traj.n, s),
            -log_k + log_sobolev_norm_coeffs(traj.n_t, s),
        ],
        sigma,
        traj.t,
    )


def e2_profile(traj: Trajectory, k: int, s: int, sigma: float) -> np.ndarray:
    e1, rest = _split_first_harmonic(traj.e)
    e1_t, rest_t = _split_first_harmonic(_time_derivative(traj))
    log_k = math.log(k)
    return _discounted(
        [
            log_k + _log_abs(e1),
            _log_abs(e1_t),
            log_k + log_sobolev_norm_coeffs(rest, s + 2),
            -0.25 * log_k + log_sobolev_norm_coeffs(rest_t, s),
            0.5 * log_k + log_sobolev_norm_coeffs(traj.n, s),
            -0.5 * log_k + log_sobolev_norm_coeffs(traj.n_t, s),
        ],
        2.0 * sigma,
        traj.t,
    )


def f2_profile(F: Forcing, k: int, s: int, sigma: float) -> np.ndarray:
    log_k = math.log(k)
    return _discounted(
        [
            0.5 * log_k + log_sobolev_norm_coeffs(F.f, s),
            -0.5 * log_k + log_sobolev_norm_coeffs(F.time_derivative(), s),
            -0.75 * log_k + log_sobolev_norm_coeffs(F.g, s),
        ],
        2.0 * sigma,
        F.t,
    )


def _sup(values: np.ndarray) -> float:
    return float(np.max(values, initial=0.0))


def e1_norm(traj: Trajectory, k: int, s: int, sigma: float) -> float:
    return _sup(e1_profile(traj, k, s, sigma))


def e2_norm(traj: Trajectory, k: int, s: int, sigma: float) -> float:
    return _sup(e2_profile(traj, k, s, sigma))


def f2_norm(F: Forcing, k: int, s: int, sigma: float) -> float:
    return _sup(f2_profile(F, k, s, sigma))


def weighted_norms(
    traj: Trajectory,
    k: int,
    s: int,
    sigma: float,
    T: Optional[float] = None,
    forcing: Optional[Forcing] = None,
) -> WeightedNorms:
    """E¹ and E² of the trajectory and F² of the forcing over t ∈ [0, T].

    F² is taken of `forcing` when given, otherwise of N_k along the trajectory.
    """
    if T is not None:
        keep = traj.t <= T + 1e-12 * max(1.0, T)
        e_t = None if traj.e_t is None else traj.e_t[keep]
        traj = Trajectory(traj.t[keep], traj.e[keep], traj.n[keep], traj.n_t[keep], e_t)
        if forcing is not None:
            forcing = forcing.restricted(T)
    if forcing is None:
        forcing = bilinear_forcing(traj, traj, k)
    return WeightedNorms(
        E1=e1_norm(traj, k, s, sigma),
        E2=e2_norm(traj, k, s, sigma),
        F2=f2_norm(forcing, k, s, sigma),
        sigma=sigma,
        k=k,
        s=s,
    )


# ============================================================================
# PICARD ITERATION
# ============================================================================

def contraction_parameter(delta: float, k: int, sigma: float, T: float) -> float:
    """δk^{-1/4}e^{σT}."""
    return delta * k ** -0.25 * math.exp(sigma * T)


def default_steps(k: int, T: float, dt_factor: float = 0.02) -> int:
    return max(1, math.ceil(T * k / dt_factor))


def picard_solve(
    cfg: "ZakharovConfig",
    Ua: UnstableMode,
    delta: Optional[float] = None,
    T: Optional[float] = None,
    tol: Optional[float] = None,
    steps: Optional[int] = None,
    workers: int = 1,
) -> PicardResult:
    """Fixed point of L_k u = δN_k(U^a + u) with zero initial data.

    Args:
        cfg: run parameters; supplies δ, tolerance and iteration cap by default
        Ua: unstable mode of the same (k, m, E̅)
        delta: perturbation size, defaults to cfg.delta
        T: final time, defaults to min(1, 3/σ)
        tol: relative E¹ increment that stops the iteration
        steps: number of time steps on [0, T]
        workers: thread pool width for the block solves

    Returns:
        PicardResult with the perturbation u and one log entry per iteration

    Raises:
        NoConvergence: max iterations reached without meeting tol
    """
    k, s, sigma = cfg.k, cfg.s, Ua.sigma
    delta = cfg.delta if delta is None else delta
    tol = cfg.picard_tol if tol is None else tol
    T = min(1.0, 3.0 / sigma) if T is None else T
    steps = default_steps(k, T) if steps is None else steps
    t = np.linspace(0.0, T, steps + 1)

    notes = []
    theta = contraction_parameter(delta, k, sigma, T)
    if theta > cfg.c0:
        message = f"Contraction condition violated: delta k^(-1/4) e^(sigma T) = {theta:.3e} > c0 = {cfg.c0}"
        logger.warning(message)
        warnings.warn(message, ContractionWarning, stacklevel=2)
        notes.append(message)

    base = Ua.trajectory(t, cfg.P)
    u = Trajectory.zeros(t, cfg.P)
    log: List[Dict] = []
    previous = None
    for iteration in range(1, cfg.picard_max_iter + 1):
        total = base + u
        F = bilinear_forcing(total, total, k).scaled(delta)
        u_next = apply_Lk_inverse(cfg, Ua.rep, F, workers=workers)
        size = e1_norm(u_next, k, s, sigma)
        increment = e1_norm(u_next + u.scaled(-1.0), k, s, sigma)
        if not (math.isfinite(size) and math.isfinite(increment)):
            log.append({"iteration": iteration, "E1": size, "increment": increment, "relative": None, "ratio": None})
            logger.warning(f"Picard k={k}: non-finite iterate at iteration {iteration} (E1={size})")
            raise NoConvergence(f"Picard iteration for k={k} produced a non-finite iterate at iteration {iteration}", log)
        ratio = increment / previous if previous else None
        relative = increment / size if size > 0 else 0.0
        log.append({"iteration": iteration, "E1": size, "increment": increment, "relative": relative, "ratio": ratio})
        logger.debug(f"Picard k={k} iteration {iteration}: E1={size:.6e}, relative increment={relative:.3e}")
        u, previous = u_next, increment
        if relative < tol:
            logger.info(f"Picard k={k} converged in {iteration} iterations (E1={size:.6e})")
            return PicardResult(u=u, log=log, iterations=iteration, warnings=notes)

    raise NoConvergence(
        f"Picard iteration for k={k} did not reach tol={tol} in {cfg.picard_max_iter} iterations", log
    )


# ============================================================================
# DIRECT INTEGRATION
# ============================================================================

def _convolution_matrix(n: np.ndarray) -> np.ndarray:
    """Matrix of e ↦ Π(n e): entry (p, q) is n̂_{p-q}."""
    P = (n.size - 1) // 2
    padded = np.zeros(4 * P + 1, dtype=np.complex128)
    padded[P:3 * P + 1] = n
    column = padded[2 * P:]
    row = padded[2 * P::-1]
    return linalg.toeplitz(column, row)


def _taylor_propagator(A: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order Taylor (classical RK4) approximation of e^{ihA}."""
    Zm = 1j * h * A
    step = np.eye(4, dtype=np.complex128)
    result = step.copy()
    for j in range(1, 5):
        step = step @ Zm / j
        result = result + step
    return result


class _LinearStep:
    """Half-step propagators for every block p = 0..P."""

    def __init__(self, k: int, m: float, E: complex, P: int, h: float, exact: bool):
        self.k, self.E, self.h, self.P = k, E, h, P
        if exact:
            mats = [block_propagator(k, m, E, p, h) for p in range(1, P + 1)]
        else:
            mats = [_taylor_propagator(build_block_matrix(k, m, E, p), h) for p in range(1, P + 1)]
        self.props = np.array(mats)
        self.c = k * np.arange(1, P + 1, dtype=float)

    def __call__(self, e: np.ndarray, n: np.ndarray, n_t: np.ndarray):
        P, h = self.P, self.h
        idx = np.arange(1, P + 1)
        V = np.stack([e[P + idx], np.conj(e[P - idx]), n[P + idx], -1j * n_t[P + idx] / self.c], axis=1)
        V = np.einsum("pij,pj->pi", self.props, V)
        e, n, n_t = e.copy(), n.copy(), n_t.copy()
        # mean mode: ∂ₜ²n̂₀ = 0 and i∂ₜê₀ = E̅n̂₀
        e[P] += -1j * self.E * (n[P] * h + 0.5 * n_t[P] * h * h)
        n[P] += h * n_t[P]
        e[P + idx] = V[:, 0]
        e[P - idx] = np.conj(V[:, 1])
        n[P + idx] = V[:, 2]
        n[P - idx] = np.conj(V[:, 2])
        n_t[P + idx] = 1j * self.c * V[:, 3]
        n_t[P - idx] = np.conj(n_t[P + idx])
        return e, n, n_t


def _nonlinear_step(e: np.ndarray, n: np.ndarray, n_t: np.ndarray, k: int, h: float):
    """Advance i∂ₜe = Π(n e), ∂ₜ(∂ₜn) = k²∂²_θΠ|e|² with n frozen over h."""
    values, vectors = linalg.eigh(_convolution_matrix(n))
    coeffs = vectors.conj().T @ e
    e_half = vectors @ (np.exp(-0.5j * h * values) * coeffs)
    e_new = vectors @ (np.exp(-1j * h * values) * coeffs)
    density = symmetrize(product_coeffs(conjugate_coeffs(e_half), e_half))
    n_t = n_t + h * float(k * k) * second_derivative_coeffs(density)
    return e_new, n_t


def _check_reality(n: np.ndarray, n_t: np.ndarray, time: float):
    drift = max(reality_drift(n), reality_drift(n_t))
    if drift > REALITY_TOL:
        raise RealityDriftError(f"Reality drift {drift:.3e} at t={time:.6g}")
    return symmetrize(n), symmetrize(n_t)


def _growth_rate(k: int, m: float, E: complex) -> float:
    try:
        return eig4(build_A(k, m, E)).sigma
    except ClassificationError:
        return 0.0


def evolve_direct(
    cfg: "ZakharovConfig",
    state0: StateU,
    T: float,
    dt: float,
    save_every: int = 1,
) -> Trajectory:
    """Strang-split integration of the full nonlinear system.

    Raises:
        ValueError: dt does not resolve the linear time scale
        BlowupDetected: H^s norm of e or n above cfg.norm_ceiling
        RealityDriftError: n or ∂ₜn lost conjugate symmetry
    """
    k, m, E, s = cfg.k, float(cfg.m), cfg.E, cfg.s
    P = state0.P
    steps = max(1, math.ceil(T / dt - 1e-9))
    h = T / steps
    if cfg.integrating_factor:
        sigma = _growth_rate(k, m, E)
        if sigma > 0 and h > 0.05 / sigma * (1 + 1e-9):
            raise ValueError(f"dt={h:.3e} exceeds 0.05/sigma={0.05 / sigma:.3e}")
    else:
        limit = 0.5 / (m * P + (k * P) ** 2)
        if h > limit * (1 + 1e-9):
            raise ValueError(f"dt={h:.3e} exceeds the explicit limit {limit:.3e}")

    linear_half = _LinearStep(k, m, E, P, 0.5 * h, exact=cfg.integrating_factor)
    e = np.array(state0.e.coeffs)
    n = np.array(state0.n.coeffs)
    n_t = np.array(state0.n_t.coeffs)
    times, es, ns, nts = [state0.t], [e], [n], [n_t]

    for step in range(1, steps + 1):
        time = state0.t + step * h
        e, n, n_t = linear_half(e, n, n_t)
        e, n_t = _nonlinear_step(e, n, n_t, k, h)
        e, n, n_t = linear_half(e, n, n_t)
        n, n_t = _check_reality(n, n_t, time)
        norm = max(float(sobolev_norm_coeffs(e, s)), float(sobolev_norm_coeffs(n, s)))
        if step % save_every == 0 or step == steps:
            times.append(time)
            es.append(e)
            ns.append(n)
            nts.append(n_t)
        if not np.isfinite(norm) or norm > cfg.norm_ceiling:
            logger.warning(f"Blow-up at t={time:.6g} for k={k}: norm={norm:.3e}")
            raise BlowupDetected(time, norm, _direct_trajectory(k, m, E, times, es, ns, nts))

    return _direct_trajectory(k, m, E, times, es, ns, nts)


def _direct_trajectory(k, m, E, times, es, ns, nts) -> Trajectory:
    e, n, n_t = np.array(es), np.array(ns), np.array(nts)
    f = product_coeffs(n, e)
    e_t = equation_time_derivative(k, m, E, e, n, f)
    return Trajectory(np.array(times), e, n, n_t, e_t)


# ============================================================================
# MEASURED CONSTANTS
# ============================================================================

def measure_C1(cfg: "ZakharovConfig", Ua: UnstableMode, F: Forcing) -> float:
    """‖L_k⁻¹F‖_{E²(T)} / ‖F‖_{F²(T)}."""
    sigma = Ua.sigma
    denominator = f2_norm(F, cfg.k, cfg.s, sigma)
    if denominator == 0:
        return 0.0
    U = apply_Lk_inverse(cfg, Ua.rep, F)
    return e2_norm(U, cfg.k, cfg.s, sigma) / denominator


def bilinear_ratio(U: Trajectory, V: Trajectory, k: int, s: int, sigma: float) -> float:
    """F²(𝒩_k(U, V)) / (E¹(U)·E¹(V))."""
    denominator = e1_norm(U, k, s, sigma) * e1_norm(V, k, s, sigma)
    if denominator == 0:
        return 0.0
    return f2_norm(bilinear_forcing(U, V, k), k, s, sigma) / denominator


def mass(e: np.ndarray) -> np.ndarray:
    """‖e‖²_{L²} along the last axis."""
    return 2.0 * math.pi * np.sum(np.abs(e) ** 2, axis=-1)

