"""
Dispersion polynomial, τ-roots and the 4×4 first-order mode matrices.

The block of Fourier harmonic p ≥ 1 carries V = (ê_p, ẽ_p, n̂_p, v_p) with
v_p = -i (kp)⁻¹ ∂ₜn̂_p and obeys i∂ₜV + A_p V = F_p. The characteristic
polynomial det(A_p - λ) is the symbol P(λ, ζ=-mp, ξ=kp) with |E̅|² as the
coupling, so every spectral statement here can be cross-checked against
tau_roots.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg

logger = logging.getLogger(__name__)

# Relative size of Im λ below which an eigenvalue counts as real
REAL_TOL = 1e-8
# |l·r| below this fraction of ‖l‖‖r‖ flags a near-defective eigenbasis
DEFECT_TOL = 1e-6


class ClassificationError(ValueError):
    """The spectrum of A is not two real eigenvalues plus a conjugate pair."""


class NearDefectiveWarning(RuntimeWarning):
    """Left and right eigenvectors are almost orthogonal."""


@dataclass(frozen=True)
class SymbolPoint:
    tau: complex
    zeta: float
    xi: float
    E_amp2: float = 0.0

    def __post_init__(self):
        if self.E_amp2 < 0:
            raise ValueError(f"E_amp2 must be non-negative, got {self.E_amp2}")


@dataclass(frozen=True)
class SpectrumReport:
    """Eigen-data of one mode block.

    For p = 1 (the report returned by eig4) the eigenvalues are ordered
    λ₁ real ≈ 2k², λ₂ real ≈ -k, λ₃ with Im > 0, λ₄ = conj(λ₃). Row j of
    `r` is the right eigenvector r_j and row j of `l` the left eigenvector l_j.
    """

    A: np.ndarray
    lambdas: np.ndarray
    r: np.ndarray
    l: np.ndarray
    sigma: float
    k: int
    m: float
    E_bar: complex
    p: int = 1
    k0: Optional[int] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def duals(self) -> np.ndarray:
        """l_j · r_j for each j."""
        return np.einsum("ji,ji->j", self.l, self.r)

    def to_dict(self) -> Dict:
        def pairs(values):
            return [[float(np.real(v)), float(np.imag(v))] for v in np.ravel(values)]

        return {
            "k": int(self.k),
            "p": int(self.p),
            "m": float(self.m),
            "E_bar": [float(self.E_bar.real), float(self.E_bar.imag)],
            "sigma": float(self.sigma),
            "k0": self.k0,
            "A": [pairs(row) for row in self.A],
            "lambdas": pairs(self.lambdas),
            "r": [pairs(row) for row in self.r],
            "l": [pairs(row) for row in self.l],
            "warnings": list(self.warnings),
        }


# ============================================================================
# SYMBOL
# ============================================================================

def eval_P0(pt: SymbolPoint) -> complex:
    """(|ξ|² - τ²)(|ξ|⁴ - (τ + ζ)²), each difference factored so no cancelling terms are rounded."""
    xi2 = pt.xi * pt.xi
    tau = complex(pt.tau)
    return (pt.xi - tau) * (pt.xi + tau) * ((xi2 - pt.zeta) - tau) * ((xi2 + pt.zeta) + tau)


def eval_P(pt: SymbolPoint) -> complex:
    """P₀ - 2|E̅|²|ξ|⁴."""
    return eval_P0(pt) - 2.0 * pt.E_amp2 * pt.xi ** 4


def _dP_dtau(tau: complex, zeta: float, xi: float) -> complex:
    u = tau + zeta
    xi2 = xi * xi
    return -2.0 * tau * (xi2 * xi2 - u * u) - 2.0 * u * (xi2 - tau * tau)


def quartic_coefficients(zeta: float, xi: float, E_amp2: float) -> np.ndarray:
    """Ascending coefficients of the monic quartic τ ↦ P(τ, ζ, ξ)."""
    xi2 = xi * xi
    coeffs = npoly.polymul([xi2, 0.0, -1.0], [xi2 * xi2 - zeta * zeta, -2.0 * zeta, -1.0])
    coeffs[0] -= 2.0 * E_amp2 * xi2 * xi2
    return coeffs


def _newton_polish(tau: complex, zeta: float, xi: float, E_amp2: float) -> complex:
    """One Newton step on P, kept only if it lowers the residual."""
    value = eval_P(SymbolPoint(tau, zeta, xi, E_amp2))
    slope = _dP_dtau(tau, zeta, xi)
    if abs(slope) <= 1e-14 * (abs(value) + 1.0):
        return tau
    candidate = tau - value / slope
    if abs(eval_P(SymbolPoint(candidate, zeta, xi, E_amp2))) < abs(value):
        return candidate
    return tau


def _pair_conjugates(roots: np.ndarray, tol: float) -> np.ndarray:
    """Zero tiny imaginary parts and force complex roots into conjugate pairs."""
    real = [complex(z.real, 0.0) for z in roots if abs(z.imag) <= tol]
    upper = [complex(z) for z in roots if z.imag > tol]
    lower = [complex(z) for z in roots if z.imag < -tol]
    if len(upper) != len(lower):
        return roots
    paired = real + upper + [z.conjugate() for z in upper]
    return np.array(sorted(paired, key=lambda z: (z.real, z.imag)))


def tau_roots(zeta: float, xi: float, E_amp2: float) -> np.ndarray:
    """The four τ-roots of P(·, ζ, ξ), closed under conjugation.

    Computed from the companion matrix of the monic quartic, then polished
    with one Newton step per root.
    """
    if xi == 0:
        raise ValueError("tau_roots requires xi != 0")
    coeffs = quartic_coefficients(zeta, xi, E_amp2)
    assert coeffs[-1] == 1.0
    roots = npoly.polyroots(coeffs)
    roots = np.array([_newton_polish(complex(z), zeta, xi, E_amp2) for z in roots])
    scale = max(1.0, float(np.max(np.abs(roots))))
    return _pair_conjugates(roots, 1e-7 * scale)


def amplification_rate(xi: float, E_amp2: float) -> float:
    """Largest Im τ on the resonant line ζ = -|ξ| - |ξ|².

    Grows like γ|ξ|^{1/2} with γ = |E̅|/√2.
    """
    xi = abs(xi)
    roots = tau_roots(-xi - xi * xi, xi, E_amp2)
    return float(np.max(roots.imag))


# ============================================================================
# MODE MATRICES
# ============================================================================

def build_block_matrix(k: int, m: float, E_bar: complex, p: int) -> np.ndarray:
    """The 4×4 matrix A_p of harmonic p ≥ 1."""
    if k < 1 or p < 1:
        raise ValueError(f"build_block_matrix needs k >= 1 and p >= 1, got k={k}, p={p}")
    E = complex(E_bar)
    c = float(k * p)
    a0 = m * p - (k * p) ** 2
    b0 = m * p + (k * p) ** 2
    return np.array(
        [
            [a0, 0, -E, 0],
            [0, b0, E.conjugate(), 0],
            [0, 0, 0, c],
            [c * E.conjugate(), c * E, c, 0],
        ],
        dtype=np.complex128,
    )


def build_A(k: int, m: float, E_bar: complex) -> np.ndarray:
    return build_block_matrix(k, m, E_bar, 1)


def _block_entries(A: np.ndarray) -> Tuple[float, float, float, complex]:
    """Recover (a0, b0, c, E̅) from a block matrix."""
    a0 = float(A[0, 0].real)
    b0 = float(A[1, 1].real)
    c = float(A[2, 3].real)
    E = complex(-A[0, 2])
    expected = np.array(
        [
            [a0, 0, -E, 0],
            [0, b0, E.conjugate(), 0],
            [0, 0, 0, c],
            [c * E.conjugate(), c * E, c, 0],
        ],
        dtype=np.complex128,
    )
    if c <= 0 or not np.allclose(A, expected, rtol=1e-12, atol=1e-12 * np.abs(A).max()):
        raise ValueError("Matrix does not have the mode-block structure")
    return a0, b0, c, E


def _pivot(lam: complex, a0: float, b0: float, c: float) -> int:
    """Component normalized to 1: the one whose unperturbed root is nearest."""
    d_a = abs(lam - a0)
    d_b = abs(lam - b0)
    d_c = min(abs(lam - c), abs(lam + c))
    if d_b < d_c and d_b <= d_a:
        return 1
    if d_a < 0.5 * d_c:
        return 0
    return 2


def _right_vector(lam: complex, a0: float, b0: float, c: float, E: complex, pivot: int) -> np.ndarray:
    Ec = E.conjugate()
    E2 = abs(E) ** 2
    if pivot == 2:
        x3 = 1.0
        x1 = E / (a0 - lam)
        x2 = -Ec / (b0 - lam)
    elif pivot == 0:
        x1 = 1.0
        x3 = -c * Ec / (c - lam * lam / c - c * E2 / (b0 - lam))
        x2 = -Ec * x3 / (b0 - lam)
    else:
        x2 = 1.0
        x3 = -c * E / (c * E2 / (a0 - lam) + c - lam * lam / c)
        x1 = E * x3 / (a0 - lam)
    return np.array([x1, x2, x3, lam * x3 / c], dtype=np.complex128)


def _left_vector(lam: complex, a0: float, b0: float, c: float, E: complex, pivot: int) -> np.ndarray:
    Ec = E.conjugate()
    E2 = abs(E) ** 2
    if pivot == 2:
        y4 = c / lam
    elif pivot == 0:
        y4 = E / (c * E2 / (lam - b0) + c - lam * lam / c)
    else:
        y4 = -Ec / (c - lam * lam / c - c * E2 / (lam - a0))
    # the pivot component is 1 and its denominator may vanish in floating point
    y = np.ones(4, dtype=np.complex128)
    y[3] = y4
    if pivot != 0:
        y[0] = c * Ec * y4 / (lam - a0)
    if pivot != 1:
        y[1] = c * E * y4 / (lam - b0)
    if pivot != 2:
        y[2] = lam * y4 / c
    return y


def _eigenvectors(
    A: np.ndarray, lambdas: np.ndarray, pivots: Optional[List[int]] = None
) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    a0, b0, c, E = _block_entries(A)
    r = np.empty((4, 4), dtype=np.complex128)
    l = np.empty((4, 4), dtype=np.complex128)
    notes = []
    for j, lam in enumerate(lambdas):
        pivot = pivots[j] if pivots else _pivot(lam, a0, b0, c)
        r[j] = _right_vector(lam, a0, b0, c, E, pivot)
        l[j] = _left_vector(lam, a0, b0, c, E, pivot)
        dual = abs(np.dot(l[j], r[j]))
        if dual < DEFECT_TOL * np.linalg.norm(l[j]) * np.linalg.norm(r[j]):
            message = f"Near-defective eigenvector for lambda={lam:.6g} (|l.r|={dual:.3e})"
            logger.warning(message)
            warnings.warn(message, NearDefectiveWarning, stacklevel=3)
            notes.append(message)
    return r, l, notes


def _polished_eigenvalues(A: np.ndarray, lambdas: np.ndarray, p: int) -> np.ndarray:
    a0, _, c, E = _block_entries(A)
    k = c / p
    m = (a0 + c * c) / p
    return np.array([_newton_polish(complex(lam), -m * p, k * p, abs(E) ** 2) for lam in lambdas])


def block_spectrum(k: int, m: float, E_bar: complex, p: int) -> SpectrumReport:
    """Eigen-data of harmonic p without the p = 1 ordering.

    Eigenvalues are sorted by real part; sigma is the largest imaginary part.
    """
    A = build_block_matrix(k, m, E_bar, p)
    lambdas = _polished_eigenvalues(A, linalg.eigvals(A), p)
    lambdas = lambdas[np.lexsort((lambdas.imag, lambdas.real))]
    r, l, notes = _eigenvectors(A, lambdas)
    return SpectrumReport(
        A=A, lambdas=lambdas, r=r, l=l, sigma=float(np.max(lambdas.imag)),
        k=k, m=float(m), E_bar=complex(E_bar), p=p, warnings=notes,
    )


def _classify(lambdas: np.ndarray, scale: float) -> np.ndarray:
    tol = REAL_TOL * scale
    i3 = int(np.argmax(lambdas.imag))
    lam3 = lambdas[i3]
    if lam3.imag <= tol:
        raise ClassificationError(
            "No unstable conjugate pair: E_bar = 0 or k below the instability threshold"
        )
    rest = [j for j in range(4) if j != i3]
    i4 = min(rest, key=lambda j: abs(lambdas[j] - lam3.conjugate()))
    if abs(lambdas[i4] - lam3.conjugate()) > 1e-6 * abs(lam3):
        raise ClassificationError(f"Eigenvalue {lam3:.6g} has no conjugate partner")
    reals = [lambdas[j] for j in rest if j != i4]
    if any(abs(z.imag) > tol for z in reals):
        raise ClassificationError("Expected two real eigenvalues besides the unstable pair")
    reals = sorted((z.real for z in reals), key=abs, reverse=True)
    if abs(abs(reals[0]) - abs(reals[1])) <= tol:
        raise ClassificationError("Real eigenvalues tie in magnitude")
    lam3 = complex(lam3.real, lam3.imag)
    return np.array([reals[0], reals[1], lam3, lam3.conjugate()], dtype=np.complex128)


def eig4(A: np.ndarray) -> SpectrumReport:
    """Classified eigen-decomposition of the p = 1 block.

    Args:
        A: matrix produced by build_A

    Returns:
        SpectrumReport with λ₁..λ₄ ordered, r₁ normalized by its second
        component and r₂..r₄ by their third component

    Raises:
        ClassificationError: spectrum lacks the two-real-plus-pair pattern
    """
    a0, _, c, E = _block_entries(A)
    k = int(round(c))
    m = a0 + c * c
    scale = float(np.linalg.norm(A))
    lambdas = _classify(linalg.eigvals(A), scale)
    lam3 = _newton_polish(lambdas[2], -m, c, abs(E) ** 2)
    lambdas = np.array(
        [
            _newton_polish(complex(lambdas[0].real), -m, c, abs(E) ** 2).real,
            _newton_polish(complex(lambdas[1].real), -m, c, abs(E) ** 2).real,
            lam3,
            lam3.conjugate(),
        ],
        dtype=np.complex128,
    )
    r, l, notes = _eigenvectors(A, lambdas, pivots=[1, 2, 2, 2])
    return SpectrumReport(
        A=A, lambdas=lambdas, r=r, l=l, sigma=float(lambdas[2].imag),
        k=k, m=float(m), E_bar=E, p=1, warnings=notes,
    )


# ============================================================================
# PROPAGATORS
# ============================================================================

def propagate(rep: SpectrumReport, t: float, Phi: np.ndarray) -> np.ndarray:
    """e^{itA}Φ = Σ_j e^{itλ_j} (l_j·Φ)/(l_j·r_j) r_j."""
    weights = np.exp(1j * t * rep.lambdas) * (rep.l @ np.asarray(Phi, dtype=np.complex128)) / rep.duals
    return rep.r.T @ weights


def propagator(rep: SpectrumReport, t: float) -> np.ndarray:
    """The 4×4 matrix e^{itA} assembled from the spectral sum."""
    phases = np.exp(1j * t * rep.lambdas) / rep.duals
    return rep.r.T @ (phases[:, None] * rep.l)


# ============================================================================
# CONVENIENCE
# ============================================================================

def sigma_of(k: int, E_bar: complex, Z) -> float:
    """Im λ₃ of the p = 1 block at m = choose_m(k, Z)."""
    from linear_solver import choose_m

    m, _ = choose_m(k, Z)
    return eig4(build_A(k, float(m), E_bar)).sigma


def discover_k0(E_bar: complex, Z, k_max: int = 4096) -> int:
    """Smallest k ≥ 1 for which eig4 classifies the p = 1 block."""
    from linear_solver import choose_m

    for k in range(1, k_max + 1):
        m, _ = choose_m(k, Z)
        try:
            eig4(build_A(k, float(m), E_bar))
        except ClassificationError:
            continue
        logger.info(f"Instability threshold k0={k} for E_bar={E_bar}, Z={Z}")
        return k
    raise ClassificationError(f"No k <= {k_max} classifies for E_bar={E_bar}")


def asymptotic_slope(ks: List[float], values: List[float]) -> float:
    """Least-squares slope of log|value| against log k."""
    if len(ks) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(ks), np.log(np.abs(values)), 1)
    return float(slope)


def block_propagator(k: int, m: float, E_bar: complex, p: int, t: float) -> np.ndarray:
    """e^{itA_p}, falling back to Padé scaling-and-squaring when E̅ = 0.

    With E̅ = 0 the block is diagonalizable but the p = 1 eigenvalues m - k²
    and k may coincide, where the closed-form eigenvectors are undefined.
    """
    if complex(E_bar) == 0:
        return linalg.expm(1j * t * build_block_matrix(k, m, E_bar, p))
    return propagator(block_spectrum(k, m, E_bar, p), t)
