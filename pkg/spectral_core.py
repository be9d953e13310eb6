"""
Periodic Fourier fields on the θ-circle.

A field is stored as its coefficient vector over the wavenumbers p = -P..P
(index p + P). Array-level helpers operate on the last axis so whole
trajectories of shape (n_times, 2P + 1) go through the same code path as a
single snapshot.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

REALITY_TOL = 1e-8


class TruncationMismatch(ValueError):
    """Two fields with different truncation P were combined."""


class RealityDriftError(ValueError):
    """A real field drifted away from conjugate symmetry."""


# ============================================================================
# ARRAY-LEVEL HELPERS
# ============================================================================

def wavenumbers(P: int) -> np.ndarray:
    """Integer wavenumbers -P..P in storage order."""
    return np.arange(-P, P + 1)


def truncation_of(coeffs: np.ndarray) -> int:
    """Recover P from a coefficient array of length 2P + 1 on the last axis."""
    size = coeffs.shape[-1]
    if size % 2 == 0:
        raise ValueError(f"Coefficient axis must have odd length, got {size}")
    return (size - 1) // 2


def dealiased_grid_size(P: int) -> int:
    """Grid size of the 3/2 padding rule for quadratic products."""
    return math.ceil(3 * (2 * P + 1) / 2)


def to_grid(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Synthesize v(θ_j) = Σ v̂_p e^{ipθ_j} on θ_j = 2πj/M."""
    P = truncation_of(coeffs)
    if M < 2 * P + 1:
        raise ValueError(f"Grid of {M} points cannot carry truncation P={P}")
    padded = np.zeros(coeffs.shape[:-1] + (M,), dtype=np.complex128)
    padded[..., wavenumbers(P) % M] = coeffs
    return np.fft.ifft(padded, axis=-1) * M


def from_grid(values: np.ndarray, P: int) -> np.ndarray:
    """Fourier coefficients -P..P of samples on a uniform θ-grid."""
    M = values.shape[-1]
    spectrum = np.fft.fft(values, axis=-1) / M
    return spectrum[..., wavenumbers(P) % M]


def product_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dealiased product of two coefficient arrays, truncated back to P."""
    if a.shape[-1] != b.shape[-1]:
        raise TruncationMismatch(
            f"Cannot multiply truncations P={truncation_of(a)} and P={truncation_of(b)}"
        )
    P = truncation_of(a)
    M = dealiased_grid_size(P)
    return from_grid(to_grid(a, M) * to_grid(b, M), P)


def conjugate_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of the complex conjugate field: conj(v̂_{-p})."""
    return np.conj(coeffs[..., ::-1])


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto real fields: average v̂_p with conj(v̂_{-p})."""
    return 0.5 * (coeffs + conjugate_coeffs(coeffs))


def reality_drift(coeffs: np.ndarray) -> float:
    """Largest departure from v̂_{-p} = conj(v̂_p), relative to the field scale."""
    scale = float(np.max(np.abs(coeffs), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(coeffs - conjugate_coeffs(coeffs)))) / scale


def enforce_reality(coeffs: np.ndarray, tol: float = REALITY_TOL) -> np.ndarray:
    """Symmetrize, refusing fields whose drift already exceeds tol."""
    drift = reality_drift(coeffs)
    if drift > tol:
        raise RealityDriftError(f"Reality drift {drift:.3e} exceeds {tol:.1e}")
    return symmetrize(coeffs)


def sobolev_weights(P: int, s: float) -> np.ndarray:
    """(1 + p²)^s for p = -P..P."""
    return (1.0 + wavenumbers(P).astype(float) ** 2) ** s


def sobolev_norm_coeffs(coeffs: np.ndarray, s: float) -> np.ndarray:
    """H^s norm over the last axis."""
    weights = sobolev_weights(truncation_of(coeffs), s)
    return np.sqrt(np.sum(weights * np.abs(coeffs) ** 2, axis=-1))


def log_sobolev_norm_coeffs(coeffs: np.ndarray, s: float) -> np.ndarray:
    """log of the H^s norm over the last axis, -inf for a zero row.

    The coefficients are never squared, so rows beyond 1e154 stay finite.
    """
    weights = sobolev_weights(truncation_of(coeffs), s)
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(coeffs))
    return 0.5 * logsumexp(2.0 * log_abs, b=weights, axis=-1)


def second_derivative_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """∂²_θ in coefficient space: multiply mode p by -p²."""
    p = wavenumbers(truncation_of(coeffs)).astype(float)
    return -(p ** 2) * coeffs


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class FourierField:
    """Coefficients v̂_p, p = -P..P, of a 2π-periodic function of θ."""

    coeffs: np.ndarray
    is_real: bool = False

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError("FourierField coefficients must be one-dimensional")
        truncation_of(arr)
        if not np.all(np.isfinite(arr)):
            raise ValueError("FourierField coefficients must be finite")
        if self.is_real:
            arr = enforce_reality(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, P: int, is_real: bool = False) -> "FourierField":
        return cls(np.zeros(2 * P + 1, dtype=np.complex128), is_real)

    @classmethod
    def from_modes(cls, P: int, modes: Dict[int, complex], is_real: bool = False) -> "FourierField":
        """Build a field from a sparse {p: v̂_p} mapping."""
        arr = np.zeros(2 * P + 1, dtype=np.complex128)
        for p, value in modes.items():
            if abs(p) > P:
                raise ValueError(f"Mode {p} outside truncation P={P}")
            arr[p + P] = value
        return cls(arr, is_real)

    @classmethod
    def from_values(cls, values: np.ndarray, P: int, is_real: bool = False) -> "FourierField":
        """Analyse samples on a uniform θ-grid."""
        return cls(from_grid(np.asarray(values, dtype=np.complex128), P), is_real)

    @classmethod
    def from_pairs(cls, pairs: List[List[float]], is_real: bool = False) -> "FourierField":
        return cls(np.array([complex(re, im) for re, im in pairs]), is_real)

    @property
    def P(self) -> int:
        return truncation_of(self.coeffs)

    def mode(self, p: int) -> complex:
        if abs(p) > self.P:
            return 0j
        return complex(self.coeffs[p + self.P])

    def values(self, M: Optional[int] = None) -> np.ndarray:
        """Samples on θ_j = 2πj/M (default M = 2P + 2)."""
        return to_grid(self.coeffs, M or 2 * self.P + 2)

    def conj(self) -> "FourierField":
        return FourierField(conjugate_coeffs(self.coeffs), self.is_real)

    def real_part(self) -> "FourierField":
        return FourierField(symmetrize(self.coeffs), is_real=True)

    def to_pairs(self) -> List[List[float]]:
        return [[float(c.real), float(c.imag)] for c in self.coeffs]

    def __add__(self, other: "FourierField") -> "FourierField":
        _require_same_truncation(self, other)
        return FourierField(self.coeffs + other.coeffs, self.is_real and other.is_real)

    def __sub__(self, other: "FourierField") -> "FourierField":
        _require_same_truncation(self, other)
        return FourierField(self.coeffs - other.coeffs, self.is_real and other.is_real)

    def __neg__(self) -> "FourierField":
        return FourierField(-self.coeffs, self.is_real)

    def __mul__(self, scalar: complex) -> "FourierField":
        keeps_real = self.is_real and complex(scalar).imag == 0.0
        return FourierField(self.coeffs * scalar, keeps_real)

    __rmul__ = __mul__


@dataclass(frozen=True)
class StateU:
    """Snapshot (e, n, ∂ₜn) at time t; n and ∂ₜn are real fields."""

    e: FourierField
    n: FourierField
    n_t: FourierField
    t: float = 0.0

    def __post_init__(self):
        _require_same_truncation(self.e, self.n)
        _require_same_truncation(self.e, self.n_t)
        if not (self.n.is_real and self.n_t.is_real):
            raise ValueError("StateU requires real n and ∂ₜn")

    @classmethod
    def zeros(cls, P: int, t: float = 0.0) -> "StateU":
        return cls(FourierField.zeros(P), FourierField.zeros(P, True), FourierField.zeros(P, True), t)

    @property
    def P(self) -> int:
        return self.e.P

    def to_dict(self) -> Dict:
        return {
            "t": float(self.t),
            "P": self.P,
            "e": self.e.to_pairs(),
            "n": self.n.to_pairs(),
            "n_t": self.n_t.to_pairs(),
        }


def _require_same_truncation(a: FourierField, b: FourierField):
    if a.P != b.P:
        raise TruncationMismatch(f"Truncation mismatch: P={a.P} vs P={b.P}")


# ============================================================================
# OPERATIONS
# ============================================================================

def sobolev_norm(v: FourierField, s: float) -> float:
    """(Σ_p (1 + p²)^s |v̂_p|²)^{1/2}."""
    if s < 0:
        raise ValueError(f"Sobolev index must be non-negative, got {s}")
    return float(sobolev_norm_coeffs(v.coeffs, s))


def l2_norm(v: FourierField) -> float:
    """L²(0, 2π) norm, i.e. √(2π) times the coefficient ℓ² norm."""
    return math.sqrt(2.0 * math.pi) * sobolev_norm(v, 0.0)


def product(a: FourierField, b: FourierField) -> FourierField:
    """Pointwise product a·b with 3/2-rule dealiasing, truncated to P."""
    _require_same_truncation(a, b)
    coeffs = product_coeffs(a.coeffs, b.coeffs)
    return FourierField(coeffs, a.is_real and b.is_real)


def second_theta_derivative(v: FourierField) -> FourierField:
    return FourierField(second_derivative_coeffs(v.coeffs), v.is_real)


@dataclass(frozen=True)
class Trajectory:
    """(e, n, ∂ₜn) sampled on a uniform time grid.

    Coefficient arrays have shape (len(t), 2P + 1). `e_t` is filled in by
    solvers that know the forcing, from the equation rather than by finite
    differences.
    """

    t: np.ndarray
    e: np.ndarray
    n: np.ndarray
    n_t: np.ndarray
    e_t: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        shape = (t.size, np.shape(self.e)[-1])
        for name in ("e", "n", "n_t", "e_t"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=np.complex128)
            if arr.shape != shape:
                raise TruncationMismatch(f"Trajectory field {name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        truncation_of(self.e)
        object.__setattr__(self, "t", t)

    @classmethod
    def zeros(cls, t: np.ndarray, P: int) -> "Trajectory":
        shape = (len(t), 2 * P + 1)
        zero = np.zeros(shape, dtype=np.complex128)
        return cls(t, zero, zero.copy(), zero.copy(), zero.copy())

    @classmethod
    def from_states(cls, states: List[StateU]) -> "Trajectory":
        return cls(
            np.array([s.t for s in states]),
            np.array([s.e.coeffs for s in states]),
            np.array([s.n.coeffs for s in states]),
            np.array([s.n_t.coeffs for s in states]),
        )

    @property
    def P(self) -> int:
        return truncation_of(self.e)

    def __len__(self) -> int:
        return self.t.size

    def state(self, i: int) -> StateU:
        return StateU(
            FourierField(self.e[i]),
            FourierField(self.n[i], is_real=True),
            FourierField(self.n_t[i], is_real=True),
            float(self.t[i]),
        )

    def final(self) -> StateU:
        return self.state(-1)

    def reality_drift(self) -> float:
        return max(reality_drift(self.n), reality_drift(self.n_t))

    def scaled(self, alpha: float) -> "Trajectory":
        e_t = None if self.e_t is None else alpha * self.e_t
        return Trajectory(self.t, alpha * self.e, alpha * self.n, alpha * self.n_t, e_t)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        if self.P != other.P or len(self) != len(other):
            raise TruncationMismatch("Trajectories differ in truncation or time grid")
        e_t = None
        if self.e_t is not None and other.e_t is not None:
            e_t = self.e_t + other.e_t
        return Trajectory(self.t, self.e + other.e, self.n + other.n, self.n_t + other.n_t, e_t)
