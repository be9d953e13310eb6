"""
Tests for Fourier fields on the θ-circle.
"""

import math

import numpy as np
import pytest

from conftest import random_coeffs
from spectral_core import (
    FourierField,
    RealityDriftError,
    StateU,
    Trajectory,
    TruncationMismatch,
    dealiased_grid_size,
    enforce_reality,
    from_grid,
    l2_norm,
    product,
    second_theta_derivative,
    sobolev_norm,
    to_grid,
)


class TestFourierField:
    def test_storage_order(self):
        v = FourierField.from_modes(3, {-3: 1.0, 0: 2.0, 2: 5.0})
        assert v.coeffs[0] == 1.0
        assert v.coeffs[3] == 2.0
        assert v.mode(2) == 5.0
        assert v.mode(7) == 0.0

    def test_even_length_rejected(self):
        with pytest.raises(ValueError, match="odd length"):
            FourierField(np.zeros(4))

    def test_mode_outside_truncation(self):
        with pytest.raises(ValueError, match="outside truncation"):
            FourierField.from_modes(2, {3: 1.0})

    def test_real_field_is_symmetrized(self):
        v = FourierField.from_modes(2, {1: 0.5, -1: 0.5}, is_real=True)
        assert np.allclose(v.values(8).imag, 0.0)

    def test_real_field_rejects_drift(self):
        with pytest.raises(RealityDriftError):
            FourierField.from_modes(2, {1: 1.0}, is_real=True)

    def test_arithmetic_preserves_reality(self):
        a = FourierField.from_modes(2, {1: 0.5, -1: 0.5}, is_real=True)
        assert (a + a).is_real
        assert (2.0 * a).is_real
        assert not (1j * a).is_real

    def test_truncation_mismatch(self):
        with pytest.raises(TruncationMismatch):
            FourierField.zeros(2) + FourierField.zeros(3)

    def test_pairs_roundtrip(self, rng):
        v = FourierField(random_coeffs(rng, 4))
        assert np.array_equal(FourierField.from_pairs(v.to_pairs()).coeffs, v.coeffs)


class TestNorms:
    def test_sobolev_single_mode(self):
        v = FourierField.from_modes(4, {3: 2.0})
        assert sobolev_norm(v, 1.5) == pytest.approx(2.0 * 10 ** 0.75, rel=1e-14)

    def test_sobolev_negative_index(self):
        with pytest.raises(ValueError):
            sobolev_norm(FourierField.zeros(2), -1)

    def test_sobolev_monotone_in_s(self, rng):
        v = FourierField(random_coeffs(rng, 6))
        assert sobolev_norm(v, 0) <= sobolev_norm(v, 1) <= sobolev_norm(v, 2.5)

    def test_l2_of_cosine(self):
        v = FourierField.from_modes(3, {1: 0.5, -1: 0.5}, is_real=True)
        assert l2_norm(v) == pytest.approx(math.sqrt(math.pi), rel=1e-14)

    @pytest.mark.parametrize("P", [2, 5, 9])
    def test_parseval(self, rng, P):
        v = FourierField(random_coeffs(rng, P))
        N = 2 * P + 2
        samples = v.values(N)
        assert l2_norm(v) ** 2 == pytest.approx(2 * math.pi / N * np.sum(np.abs(samples) ** 2), rel=1e-10)


class TestGrid:
    def test_dealiased_size(self):
        assert dealiased_grid_size(4) == 14
        assert dealiased_grid_size(1) == 5

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            to_grid(np.zeros(9), 8)

    def test_synthesis_analysis(self, rng):
        coeffs = random_coeffs(rng, 5)
        assert np.allclose(from_grid(to_grid(coeffs, 24), 5), coeffs, atol=1e-14)

    def test_enforce_reality_tolerance(self):
        coeffs = np.array([0.5, 0.0, 0.5 + 1e-12j])
        assert np.allclose(enforce_reality(coeffs), [0.5, 0.0, 0.5])


class TestProduct:
    def test_cosine_squared(self):
        c = FourierField.from_modes(4, {1: 0.5, -1: 0.5}, is_real=True)
        out = product(c, c)
        expected = FourierField.from_modes(4, {0: 0.5, 2: 0.25, -2: 0.25})
        assert np.allclose(out.coeffs, expected.coeffs, atol=1e-15)
        assert out.is_real

    def test_against_quadrature(self, rng):
        P = 8
        a = FourierField(random_coeffs(rng, P))
        b = FourierField(random_coeffs(rng, P))
        reference = from_grid(to_grid(a.coeffs, 64) * to_grid(b.coeffs, 64), P)
        assert np.abs(product(a, b).coeffs - reference).max() <= 1e-12 * np.abs(reference).max()

    def test_commutative_and_identity(self, rng):
        a = FourierField(random_coeffs(rng, 5))
        b = FourierField(random_coeffs(rng, 5))
        one = FourierField.from_modes(5, {0: 1.0})
        assert np.allclose(product(a, b).coeffs, product(b, a).coeffs, atol=1e-13)
        assert np.allclose(product(a, one).coeffs, a.coeffs, atol=1e-13)

    def test_bilinear(self, rng):
        a, b, c = (FourierField(random_coeffs(rng, 4)) for _ in range(3))
        lhs = product(a * 2.0 + b, c)
        rhs = product(a, c) * 2.0 + product(b, c)
        assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-13)


class TestSecondDerivative:
    def test_single_mode(self):
        out = second_theta_derivative(FourierField.from_modes(2, {1: 1.0}))
        assert out.mode(1) == -1.0

    def test_constant_vanishes(self):
        out = second_theta_derivative(FourierField.from_modes(2, {0: 3.0}))
        assert np.all(out.coeffs == 0)

    def test_cos_3theta(self):
        v = FourierField.from_modes(4, {3: 0.5, -3: 0.5}, is_real=True)
        out = second_theta_derivative(v)
        assert np.allclose(out.coeffs, -9 * v.coeffs)
        assert out.is_real

    def test_zero_mean(self, rng):
        out = second_theta_derivative(FourierField(random_coeffs(rng, 6)))
        assert out.mode(0) == 0


class TestStateAndTrajectory:
    def test_state_requires_real_n(self):
        with pytest.raises(ValueError, match="real"):
            StateU(FourierField.zeros(2), FourierField.zeros(2), FourierField.zeros(2, True))

    def test_state_serialization(self):
        state = StateU.zeros(2, t=0.5)
        data = state.to_dict()
        assert data["t"] == 0.5
        assert data["P"] == 2
        assert len(data["e"]) == 5

    def test_trajectory_shape_check(self):
        with pytest.raises(TruncationMismatch):
            Trajectory(np.zeros(3), np.zeros((3, 5)), np.zeros((3, 5)), np.zeros((2, 5)))

    def test_trajectory_arithmetic(self, rng):
        t = np.linspace(0, 1, 4)
        e = np.array([random_coeffs(rng, 2) for _ in t])
        n = np.array([random_coeffs(rng, 2, real=True) for _ in t])
        traj = Trajectory(t, e, n, n)
        doubled = traj + traj
        assert np.allclose(doubled.e, traj.scaled(2.0).e)
        assert traj.reality_drift() < 1e-15
        assert traj.final().t == 1.0
        assert Trajectory.from_states([traj.state(i) for i in range(len(traj))]).P == 2
