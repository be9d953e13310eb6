"""
Blockwise solution of L_k U = F with vanishing initial data.

Harmonic p ≥ 1 is a 4×4 first-order block i∂ₜV + A_p V = F_p with
V = (ê_p, ẽ_p, n̂_p, v_p), ẽ_p = conj(ê_{-p}) and v_p = -i(kp)⁻¹∂ₜn̂_p.
Every block is advanced by the Duhamel sum over its eigendirections with an
exponential trapezoid rule, so e^{σt} growth costs nothing in step size.
The mean mode p = 0 decouples once ĝ₀ = 0.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.signal import lfilter

from dispersion import SpectrumReport, block_spectrum, build_A, eig4
from spectral_core import Trajectory, truncation_of, wavenumbers

if TYPE_CHECKING:
    from schemas import ZakharovConfig

logger = logging.getLogger(__name__)

# Below this |z| the φ-functions are summed from their Taylor series
PHI_SERIES_RADIUS = 0.5
PHI_SERIES_TERMS = 18

# Growth σt above this is carried as a separate exponent
OVERFLOW_EXPONENT = 30.0


class NonzeroMeanForcing(ValueError):
    """The wave forcing has a nonzero mean coefficient ĝ₀."""


# ============================================================================
# DATA TYPES
# ============================================================================

@dataclass(frozen=True)
class Forcing:
    """Forcing (f, g) sampled on a uniform time grid, arrays (len(t), 2P + 1).

    f_t is the exact time derivative when the producer knows it; otherwise
    it is estimated with second-order differences.
    """

    t: np.ndarray
    f: np.ndarray
    g: np.ndarray
    f_t: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "f", np.asarray(self.f, dtype=np.complex128))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=np.complex128))
        if self.f.shape != self.g.shape or self.f.shape[0] != self.t.size:
            raise ValueError(f"Forcing shapes disagree: t={self.t.shape}, f={self.f.shape}, g={self.g.shape}")
        if self.f_t is not None:
            object.__setattr__(self, "f_t", np.asarray(self.f_t, dtype=np.complex128))

    @classmethod
    def zeros(cls, t: np.ndarray, P: int) -> "Forcing":
        shape = (len(t), 2 * P + 1)
        return cls(t, np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @property
    def P(self) -> int:
        return truncation_of(self.f)

    def time_derivative(self) -> np.ndarray:
        if self.f_t is not None:
            return self.f_t
        return np.gradient(self.f, self.t, axis=0, edge_order=2)

    def block(self, p: int) -> "ForcingBlock":
        P = self.P
        return ForcingBlock(
            p=p,
            t=self.t,
            f_hat=self.f[:, P + p],
            f_tilde=-np.conj(self.f[:, P - p]),
            g_hat=self.g[:, P + p],
        )

    def restricted(self, T: float) -> "Forcing":
        """Samples with t ≤ T."""
        keep = self.t <= T + 1e-12 * max(1.0, T)
        f_t = None if self.f_t is None else self.f_t[keep]
        return Forcing(self.t[keep], self.f[keep], self.g[keep], f_t)

    def scaled(self, alpha: complex) -> "Forcing":
        f_t = None if self.f_t is None else alpha * self.f_t
        return Forcing(self.t, alpha * self.f, alpha * self.g, f_t)


@dataclass(frozen=True)
class ForcingBlock:
    """(f̂_p, f̃_p, ĝ_p) with f̃_p = -conj(f̂_{-p})."""

    p: int
    t: np.ndarray
    f_hat: np.ndarray
    f_tilde: np.ndarray
    g_hat: np.ndarray

    def vector(self, k: int) -> np.ndarray:
        """Right-hand side (f̂, f̃, 0, ĝ/(kp)) of the first-order block, shape (N, 4)."""
        c = float(k * self.p)
        return np.stack(
            [self.f_hat, self.f_tilde, np.zeros_like(self.f_hat), self.g_hat / c], axis=1
        ).astype(np.complex128)


@dataclass(frozen=True)
class GrowthScaled:
    """Samples stored as mantissa·e^{exponent}, one exponent per time sample.

    The exponent is σt once σt exceeds OVERFLOW_EXPONENT and 0 before, so
    the mantissa stays O(1) however long the unstable mode grows.
    """

    mantissa: np.ndarray
    exponent: np.ndarray

    @staticmethod
    def shifts(sigma: float, t: np.ndarray) -> np.ndarray:
        growth = sigma * np.asarray(t, dtype=float)
        return np.where(growth > OVERFLOW_EXPONENT, growth, 0.0)

    def _expanded(self, values: np.ndarray) -> np.ndarray:
        return values.reshape(values.shape + (1,) * (self.mantissa.ndim - values.ndim))

    def values(self) -> np.ndarray:
        """mantissa·e^{exponent}; overflows to inf past σt ≈ 709."""
        with np.errstate(over="ignore"):
            return self.mantissa * self._expanded(np.exp(self.exponent))

    def log_abs(self) -> np.ndarray:
        """log|values| elementwise, finite wherever the mantissa is nonzero."""
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.mantissa)) + self._expanded(self.exponent)


@dataclass(frozen=True)
class ModeBlockState:
    """Trajectory of one block.

    For p ≥ 1 the columns are (ê_p, ẽ_p, n̂_p, v_p); for p = 0 they are
    (ê₀, n̂₀, ∂ₜn̂₀).
    """

    p: int
    t: np.ndarray
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        """Long-form table with columns t, p and re/im of every component."""
        names = ["e0", "n0", "n0_t"] if self.p == 0 else ["e", "e_tilde", "n", "v"]
        frame = pd.DataFrame({"t": self.t, "p": self.p})
        for j, name in enumerate(names):
            frame[f"{name}_re"] = self.values[:, j].real
            frame[f"{name}_im"] = self.values[:, j].imag
        return frame


# ============================================================================
# PARAMETERS
# ============================================================================

def largest_multiple_at_most(bound: Union[float, Fraction], Z: Union[int, Fraction]) -> Fraction:
    """Largest m with m·Z ∈ ℤ and m ≤ bound."""
    Z = Fraction(Z)
    return Fraction(math.floor(Fraction(bound) * Z)) / Z


def choose_m(k: int, Z: Union[int, str, Fraction]) -> Tuple[Fraction, Fraction]:
    """Pick m ∈ (k² + k - 1/Z, k² + k] with m·Z an integer.

    Returns:
        (m, m′) with m′ = m - k² - k ∈ (-1/Z, 0]
    """
    Z = Fraction(Z)
    if k < 1 or Z <= 0:
        raise ValueError(f"choose_m needs k >= 1 and Z > 0, got k={k}, Z={Z}")
    m = largest_multiple_at_most(k * k + k, Z)
    return m, m - k * k - k


# ============================================================================
# EXPONENTIAL TRAPEZOID
# ============================================================================

def phi_functions(z: complex) -> Tuple[complex, complex]:
    """φ₁(z) = (e^z - 1)/z and φ₂(z) = (e^z - 1 - z)/z²."""
    if abs(z) < PHI_SERIES_RADIUS:
        term = 1.0 + 0j
        phi1 = phi2 = 0j
        for j in range(PHI_SERIES_TERMS):
            # term = z^j / j!
            phi1 += term / (j + 1)
            phi2 += term / ((j + 1) * (j + 2))
            term *= z / (j + 1)
        return phi1, phi2
    ez = np.exp(z)
    return (ez - 1.0) / z, (ez - 1.0 - z) / (z * z)


def exponential_trapezoid(lam: complex, Phi: np.ndarray, h: float) -> np.ndarray:
    """ψ(t_n) = ∫₀^{t_n} e^{iλ(t_n - s)} Φ(s) ds for Φ linear between samples."""
    z = 1j * lam * h
    phi1, phi2 = phi_functions(z)
    increments = h * ((phi1 - phi2) * Phi[:-1] + phi2 * Phi[1:])
    psi = np.zeros(Phi.shape[0], dtype=np.complex128)
    if increments.size:
        psi[1:] = lfilter([1.0], [1.0, -np.exp(z)], increments)
    return psi


def _uniform_step(t: np.ndarray) -> float:
    if t.size < 2:
        return 0.0
    h = (t[-1] - t[0]) / (t.size - 1)
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=0.0):
        raise ValueError("Forcing must be sampled on a uniform time grid")
    if abs(t[0]) > 1e-14:
        raise ValueError("Time grid must start at t = 0")
    return float(h)


def solve_block_duhamel(rep: SpectrumReport, F: ForcingBlock) -> ModeBlockState:
    """V(t) = -i Σ_j ∫₀ᵗ e^{i(t-s)λ_j} (l_j·F(s))/(l_j·r_j) r_j ds for one block."""
    h = _uniform_step(F.t)
    rhs = F.vector(rep.k)
    Phi = rhs @ rep.l.T
    psi = np.empty_like(Phi)
    for j, lam in enumerate(rep.lambdas):
        psi[:, j] = exponential_trapezoid(lam, Phi[:, j], h)
    V = -1j * (psi / rep.duals) @ rep.r
    return ModeBlockState(p=rep.p, t=F.t, values=V)


def _restrict_block(F: ForcingBlock, T: Optional[float]) -> ForcingBlock:
    if T is None:
        return F
    if F.t[-1] < T - 1e-12 * max(1.0, T):
        raise ValueError(f"Forcing grid ends at {F.t[-1]} before T={T}")
    keep = F.t <= T + 1e-12 * max(1.0, T)
    return ForcingBlock(F.p, F.t[keep], F.f_hat[keep], F.f_tilde[keep], F.g_hat[keep])


# ============================================================================
# UNSTABLE MODE
# ============================================================================

@dataclass(frozen=True)
class UnstableMode:
    """Closed-form growing solution of the homogeneous p = 1 block.

    V₁(t) = ¼(e^{itλ₄}r₄ - e^{itλ₃}r₃), so that n̂₁(t) = ½e^{itRe λ₃} sinh(σt)
    and n(t, θ) = sinh(σt) cos(t Re λ₃ + θ).
    """

    rep: SpectrumReport

    @property
    def sigma(self) -> float:
        return self.rep.sigma

    @property
    def coefficients(self) -> Dict[str, complex]:
        """ê₁(t) = (e₊e^{σt} + e₋e^{-σt})e^{itRe λ₃}."""
        return {"e_plus": complex(self.rep.r[3, 0]) / 4.0, "e_minus": -complex(self.rep.r[2, 0]) / 4.0}

    def block_scaled(self, t: np.ndarray) -> Tuple[GrowthScaled, GrowthScaled]:
        """V₁ and ∂ₜV₁ at the times t with the e^{σt} growth split off past σt = 30."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        shift = GrowthScaled.shifts(self.sigma, t)
        lam3, lam4 = self.rep.lambdas[2], self.rep.lambdas[3]
        # |e^{itλ₄}| = e^{σt}, |e^{itλ₃}| = e^{-σt}
        w3 = np.exp(1j * t * lam3 - shift)[:, None]
        w4 = np.exp(1j * t * lam4 - shift)[:, None]
        r3, r4 = self.rep.r[2][None, :], self.rep.r[3][None, :]
        V = 0.25 * (w4 * r4 - w3 * r3)
        V_t = 0.25j * (lam4 * w4 * r4 - lam3 * w3 * r3)
        return GrowthScaled(V, shift), GrowthScaled(V_t, shift)

    def block(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """V₁ and ∂ₜV₁ at the times t, each of shape (len(t), 4)."""
        V, V_t = self.block_scaled(t)
        return V.values(), V_t.values()

    def log_l2_n(self, t: np.ndarray) -> np.ndarray:
        """log‖n^a(t)‖_{L²(0,2π)} = log(√π sinh σt), finite at any σt > 0."""
        V, _ = self.block_scaled(t)
        return 0.5 * math.log(4.0 * math.pi) + V.log_abs()[:, 2]

    def trajectory(self, t: np.ndarray, P: int) -> Trajectory:
        """U^a on the time grid t, embedded in truncation P."""
        if P < 1:
            raise ValueError("Unstable mode needs P >= 1")
        t = np.asarray(t, dtype=float)
        V, V_t = self.block(t)
        k = self.rep.k
        traj = assemble_blocks(
            k,
            ModeBlockState(0, t, np.zeros((t.size, 3), dtype=np.complex128)),
            [ModeBlockState(1, t, V)] + [ModeBlockState(p, t, np.zeros_like(V)) for p in range(2, P + 1)],
        )
        e_t = np.zeros_like(traj.e)
        e_t[:, P + 1] = V_t[:, 0]
        e_t[:, P - 1] = np.conj(V_t[:, 1])
        return Trajectory(traj.t, traj.e, traj.n, traj.n_t, e_t)

    def state(self, t: float, P: int):
        return self.trajectory(np.array([t]), P).state(0)


def build_unstable_mode(k: int, E_bar: complex, Z) -> UnstableMode:
    """U^a for harmonic k at m = choose_m(k, Z).

    Raises:
        ClassificationError: the p = 1 block has no unstable pair
    """
    m, _ = choose_m(k, Z)
    rep = eig4(build_A(k, float(m), E_bar))
    logger.info(f"Unstable mode k={k}: sigma={rep.sigma:.6g}, Re lambda3={rep.lambdas[2].real:.6g}")
    return UnstableMode(rep)


# ============================================================================
# BLOCK SOLVERS
# ============================================================================

def solve_p1_duhamel(rep: SpectrumReport, F1: ForcingBlock, T: Optional[float] = None) -> ModeBlockState:
    """Unstable p = 1 block with zero initial data."""
    if rep.p != 1 or F1.p != 1:
        raise ValueError("solve_p1_duhamel handles the p = 1 block only")
    return solve_block_duhamel(rep, _restrict_block(F1, T))


def solve_p0(
    t: np.ndarray,
    f0: np.ndarray,
    g0: Optional[np.ndarray] = None,
    T: Optional[float] = None,
) -> ModeBlockState:
    """Mean mode with zero initial data: n̂₀ = 0 and ê₀(t) = ∫₀ᵗ f̂₀.

    Raises:
        NonzeroMeanForcing: ĝ₀ is not identically zero
    """
    t = np.asarray(t, dtype=float)
    f0 = np.asarray(f0, dtype=np.complex128)
    if g0 is not None:
        scale = max(1.0, float(np.max(np.abs(f0), initial=0.0)))
        if float(np.max(np.abs(g0), initial=0.0)) > 1e-12 * scale:
            raise NonzeroMeanForcing(f"Mean wave forcing max|g0|={np.max(np.abs(g0)):.3e} must vanish")
    if T is not None:
        keep = t <= T + 1e-12 * max(1.0, T)
        t, f0 = t[keep], f0[keep]
    e0 = cumulative_trapezoid(f0, t, initial=0.0) if t.size > 1 else np.zeros_like(f0)
    zero = np.zeros_like(e0)
    return ModeBlockState(p=0, t=t, values=np.stack([e0, zero, zero], axis=1))


@lru_cache(maxsize=256)
def _cached_block_spectrum(k: int, m: float, E_re: float, E_im: float, p: int) -> SpectrumReport:
    return block_spectrum(k, m, complex(E_re, E_im), p)


def solve_pge2(
    k: int,
    m: float,
    E_bar: complex,
    p: int,
    F: ForcingBlock,
    T: Optional[float] = None,
) -> ModeBlockState:
    """Stable block p ≥ 2 with zero initial data."""
    if p < 2 or F.p != p:
        raise ValueError(f"solve_pge2 needs p >= 2 matching the forcing block, got p={p}, F.p={F.p}")
    E = complex(E_bar)
    rep = _cached_block_spectrum(int(k), float(m), E.real, E.imag, p)
    return solve_block_duhamel(rep, _restrict_block(F, T))


def _schrodinger_symbol(k: int, m: float, P: int) -> np.ndarray:
    """mp - k²p² for p = -P..P."""
    p = wavenumbers(P).astype(float)
    return m * p - (k * p) ** 2


def equation_time_derivative(
    k: int, m: float, E_bar: complex, e: np.ndarray, n: np.ndarray, f: np.ndarray
) -> np.ndarray:
    """∂ₜê_p = i(mp - k²p²)ê_p - iE̅n̂_p - if̂_p."""
    a = _schrodinger_symbol(k, m, truncation_of(e))
    return 1j * a * e - 1j * complex(E_bar) * n - 1j * f


def apply_Lk_inverse(
    cfg: "ZakharovConfig",
    spectrum: Optional[SpectrumReport],
    F: Forcing,
    T: Optional[float] = None,
    workers: int = 1,
) -> Trajectory:
    """Solve L_k U = F with e = n = ∂ₜn = 0 at t = 0.

    Args:
        cfg: run parameters (k, m, E̅)
        spectrum: eig4 report of the p = 1 block, computed when None
        F: forcing sampled on a uniform grid starting at t = 0
        T: final time, defaults to the end of the forcing grid
        workers: thread pool width for the per-block solves

    Returns:
        Trajectory on the forcing grid with e_t filled from the equation
    """
    if T is not None:
        F = F.restricted(T)
    P = F.P
    k, m, E = cfg.k, float(cfg.m), cfg.E
    if spectrum is None:
        spectrum = eig4(build_A(k, m, E))

    def solve(p: int) -> ModeBlockState:
        if p == 1:
            return solve_p1_duhamel(spectrum, F.block(1))
        return solve_pge2(k, m, E, p, F.block(p))

    mean = solve_p0(F.t, -1j * F.f[:, P], F.g[:, P])
    if workers > 1 and P > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(solve, range(1, P + 1)))
    else:
        blocks = [solve(p) for p in range(1, P + 1)]

    traj = assemble_blocks(k, mean, blocks)
    e_t = equation_time_derivative(k, m, E, traj.e, traj.n, F.f)
    return Trajectory(traj.t, traj.e, traj.n, traj.n_t, e_t)


def assemble_blocks(k: int, mean: ModeBlockState, blocks: List[ModeBlockState]) -> Trajectory:
    """Reassemble per-block states into (e, n, ∂ₜn) coefficient arrays."""
    P = len(blocks)
    shape = (mean.t.size, 2 * P + 1)
    e = np.zeros(shape, dtype=np.complex128)
    n = np.zeros(shape, dtype=np.complex128)
    n_t = np.zeros(shape, dtype=np.complex128)
    e[:, P] = mean.values[:, 0]
    n[:, P] = mean.values[:, 1].real
    n_t[:, P] = mean.values[:, 2].real
    for block in sorted(blocks, key=lambda b: b.p):
        p, V = block.p, block.values
        e[:, P + p] = V[:, 0]
        e[:, P - p] = np.conj(V[:, 1])
        n[:, P + p] = V[:, 2]
        n[:, P - p] = np.conj(V[:, 2])
        n_t[:, P + p] = 1j * k * p * V[:, 3]
        n_t[:, P - p] = np.conj(n_t[:, P + p])
    return Trajectory(mean.t, e, n, n_t)


def split_blocks(k: int, traj: Trajectory) -> Dict[int, ModeBlockState]:
    """Inverse of assemble_blocks."""
    P = traj.P
    states = {0: ModeBlockState(0, traj.t, np.stack([traj.e[:, P], traj.n[:, P], traj.n_t[:, P]], axis=1))}
    for p in range(1, P + 1):
        V = np.stack(
            [
                traj.e[:, P + p],
                np.conj(traj.e[:, P - p]),
                traj.n[:, P + p],
                -1j * traj.n_t[:, P + p] / (k * p),
            ],
            axis=1,
        )
        states[p] = ModeBlockState(p, traj.t, V)
    return states


# ============================================================================
# RESIDUALS AND MEASURED CONSTANTS
# ============================================================================

def apply_Lk(cfg: "ZakharovConfig", traj: Trajectory) -> Forcing:
    """Forcing (f, g) that the trajectory satisfies, by second-order time differences.

    f = i∂ₜe + (mp - k²p²)ê - E̅n̂ and g = ∂ₜ²n̂ + k²p²n̂ + k²p²(E̅̄ê + E̅ẽ).
    """
    k, m, E = cfg.k, float(cfg.m), cfg.E
    P = traj.P
    p2 = (k * wavenumbers(P).astype(float)) ** 2
    e_t = traj.e_t if traj.e_t is not None else np.gradient(traj.e, traj.t, axis=0, edge_order=2)
    n_tt = np.gradient(traj.n_t, traj.t, axis=0, edge_order=2)
    e_tilde = np.conj(traj.e[:, ::-1])
    f = 1j * e_t + _schrodinger_symbol(k, m, P) * traj.e - E * traj.n
    g = n_tt + p2 * traj.n + p2 * (np.conj(E) * traj.e + E * e_tilde)
    return Forcing(traj.t, f, g)


def midpoint_residual(cfg: "ZakharovConfig", traj: Trajectory, F: Forcing) -> float:
    """Largest block residual of i∂ₜV + A_pV - F_p at grid midpoints, relative to the local scale."""
    k, m, E = cfg.k, float(cfg.m), cfg.E
    h = _uniform_step(traj.t)
    worst = 0.0
    blocks = split_blocks(k, traj)
    for p in range(1, traj.P + 1):
        V = blocks[p].values
        A = _cached_block_spectrum(k, m, E.real, E.imag, p).A
        rhs = F.block(p).vector(k)
        dV = (V[1:] - V[:-1]) / h
        V_mid = 0.5 * (V[1:] + V[:-1])
        F_mid = 0.5 * (rhs[1:] + rhs[:-1])
        AV = V_mid @ A.T
        residual = 1j * dV + AV - F_mid
        scale = np.maximum.reduce([np.abs(dV).max(axis=1), np.abs(AV).max(axis=1), np.abs(F_mid).max(axis=1)])
        active = scale > 0
        if np.any(active):
            worst = max(worst, float(np.max(np.abs(residual[active]).max(axis=1) / scale[active])))
    return worst


def pge2_estimate_constant(
    k: int, m: float, E_bar: complex, p: int, F: ForcingBlock, T: float = 1.0
) -> float:
    """Measured ratio of the p ≥ 2 stability estimate over t ∈ (0, min(T, 1)].

    Left side: k²p²(|ê|+|ẽ|) + |∂ₜê|+|∂ₜẽ| + kp|n̂| + |∂ₜn̂|. Right side: the
    L¹ norms of (f̂, f̃), of their time derivatives and of ĝ, plus |f(0)| + |f(t)|.
    """
    F = _restrict_block(F, min(T, 1.0))
    state = solve_pge2(k, m, E_bar, p, F)
    V = state.values
    c = k * p
    E = complex(E_bar)
    A = _cached_block_spectrum(int(k), float(m), E.real, E.imag, p).A
    rhs = F.vector(k)
    V_t = 1j * (V @ A.T - rhs)
    lhs = (
        c * c * (np.abs(V[:, 0]) + np.abs(V[:, 1]))
        + np.abs(V_t[:, 0]) + np.abs(V_t[:, 1])
        + c * np.abs(V[:, 2]) + c * np.abs(V[:, 3])
    )
    f_abs = np.abs(F.f_hat) + np.abs(F.f_tilde)
    f_t = np.abs(np.gradient(F.f_hat, F.t, edge_order=2)) + np.abs(np.gradient(F.f_tilde, F.t, edge_order=2))
    rhs_norm = (
        cumulative_trapezoid(f_abs, F.t, initial=0.0)
        + cumulative_trapezoid(f_t, F.t, initial=0.0)
        + cumulative_trapezoid(np.abs(F.g_hat), F.t, initial=0.0)
        + f_abs[0] + f_abs
    )
    active = (F.t > 0) & (rhs_norm > 0)
    if not np.any(active):
        return 0.0
    return float(np.max(lhs[active] / rhs_norm[active]))


def p1_growth_constant(rep: SpectrumReport, T: float, steps: int = 4000, K: float = 1.0) -> float:
    """Measured C in k|ê₁| + |∂ₜê₁| ≤ C·K·e^{2σt} under the e^{2σt} forcing envelope.

    The forcing saturates k^{1/2}|f̂₁| + k^{-1/2}|∂ₜf̂₁| + k^{-3/4}|ĝ₁| ≤ K e^{2σt}
    with each of f̂₁, f̃₁ and ĝ₁ taking a third of K.
    """
    k, sigma = rep.k, rep.sigma
    t = np.linspace(0.0, T, steps + 1)
    envelope = K * np.exp(2.0 * sigma * t) / 3.0
    f_scale = 1.0 / (math.sqrt(k) + 2.0 * sigma / math.sqrt(k))
    F1 = ForcingBlock(
        p=1,
        t=t,
        f_hat=f_scale * envelope,
        f_tilde=-f_scale * envelope,
        g_hat=k ** 0.75 * envelope,
    )
    V = solve_p1_duhamel(rep, F1).values
    V_t = 1j * (V @ rep.A.T - F1.vector(k))
    lhs = k * np.abs(V[:, 0]) + np.abs(V_t[:, 0])
    return float(np.max(lhs / (K * np.exp(2.0 * sigma * t))))
