"""
Tests for the quadratic nonlinearity, weighted norms, Picard iteration and
the Strang-split direct integrator.
"""

import math

import numpy as np
import pytest

import nonlinear
from conftest import random_coeffs
from linear_solver import build_unstable_mode
from nonlinear import (
    BlowupDetected,
    ContractionWarning,
    NoConvergence,
    N_k,
    bilinear_N,
    bilinear_forcing,
    bilinear_ratio,
    contraction_parameter,
    e1_norm,
    e1_profile,
    e2_norm,
    e2_profile,
    evolve_direct,
    mass,
    measure_C1,
    picard_solve,
    weighted_norms,
)
from schemas import ZakharovConfig
from spectral_core import (
    FourierField,
    StateU,
    Trajectory,
    from_grid,
    l2_norm,
    product,
    sobolev_norm_coeffs,
    to_grid,
    wavenumbers,
)


def random_state(rng, P, scale=1.0):
    return StateU(
        FourierField(random_coeffs(rng, P, scale=scale)),
        FourierField(random_coeffs(rng, P, real=True, scale=scale), is_real=True),
        FourierField(random_coeffs(rng, P, real=True, scale=scale), is_real=True),
    )


def scaled(state, delta):
    return StateU(state.e * delta, state.n * delta, state.n_t * delta, state.t)


def growing_trajectory(rng, k, s, sigma, P=4, samples=21):
    """Random trajectory growing like e^{σt} with each E¹ term of order one."""
    t = np.linspace(0.0, 1.0 / sigma, samples)
    p = wavenumbers(P).astype(float)
    e_scale = k ** -0.75 * (1 + p ** 2) ** (-(s + 2) / 2)
    e_scale[P + 1] = k ** -0.5
    growth = np.exp(sigma * t)[:, None]
    e = growth * (e_scale * random_coeffs(rng, P))
    n = growth * ((1 + p ** 2) ** (-s / 2) * random_coeffs(rng, P, real=True))
    return Trajectory(t, e, n, sigma * n, sigma * e)


class TestBilinearForm:
    def test_diagonal_is_quadratic_term(self, rng):
        U = random_state(rng, 4)
        f, g = N_k(U, 3)
        assert np.allclose(f.coeffs, product(U.n, U.e).coeffs, atol=1e-13)
        assert g.is_real
        assert g.mode(0) == 0

    def test_symmetric(self, rng):
        U, V = random_state(rng, 4), random_state(rng, 4)
        f_uv, g_uv = bilinear_N(U, V, 5)
        f_vu, g_vu = bilinear_N(V, U, 5)
        assert np.allclose(f_uv.coeffs, f_vu.coeffs, atol=1e-13)
        assert np.allclose(g_uv.coeffs, g_vu.coeffs, atol=1e-12)

    def test_wave_forcing_of_two_modes(self):
        k = 3
        e = FourierField.from_modes(4, {1: 1.0, 2: 1.0})
        zero = FourierField.zeros(4, True)
        # |e|² = 2 + 2cos θ
        _, g = N_k(StateU(e, zero, zero), k)
        assert g.mode(1) == pytest.approx(-k * k)
        assert g.mode(-1) == pytest.approx(-k * k)
        assert abs(g.mode(2)) < 1e-13

    def test_single_mode_has_no_wave_forcing(self):
        e = FourierField.from_modes(3, {1: 0.7j})
        zero = FourierField.zeros(3, True)
        _, g = N_k(StateU(e, zero, zero), 4)
        assert np.abs(g.coeffs).max() < 1e-13

    def test_zero_mean_wave_forcing(self, rng):
        for _ in range(100):
            U, V = random_state(rng, 5), random_state(rng, 5)
            _, g = bilinear_N(U, V, int(rng.integers(1, 200)))
            assert g.mode(0) == 0

    def test_against_grid_quadrature(self, rng):
        P, k, M = 4, 3, 64
        U, V = random_state(rng, P), random_state(rng, P)
        f, g = bilinear_N(U, V, k)
        nu, nv = to_grid(U.n.coeffs, M), to_grid(V.n.coeffs, M)
        eu, ev = to_grid(U.e.coeffs, M), to_grid(V.e.coeffs, M)
        f_ref = from_grid(0.5 * (nu * ev + nv * eu), P)
        overlap = from_grid((np.conj(eu) * ev).real, P)
        g_ref = -(k * k) * np.arange(-P, P + 1) ** 2 * overlap
        g_ref[P] = 0.0
        assert np.abs(f.coeffs - f_ref).max() <= 1e-11 * np.abs(f_ref).max()
        assert np.abs(g.coeffs - g_ref).max() <= 1e-11 * np.abs(g_ref).max()

    def test_forcing_matches_snapshots(self, rng):
        t = np.linspace(0, 1, 4)
        states = [random_state(rng, 3) for _ in t]
        U = Trajectory.from_states([StateU(s.e, s.n, s.n_t, ti) for s, ti in zip(states, t)])
        F = bilinear_forcing(U, U, 2)
        for i, state in enumerate(states):
            f, g = N_k(state, 2)
            assert np.allclose(F.f[i], f.coeffs, atol=1e-12)
            assert np.allclose(F.g[i], g.coeffs, atol=1e-11)

    def test_exact_time_derivative(self):
        Ua = build_unstable_mode(8, 1.0, 1)
        t = np.linspace(0.0, 1.0, 4001)
        traj = Ua.trajectory(t, 4)
        F = bilinear_forcing(traj, traj, 8)
        numeric = np.gradient(F.f, t, axis=0, edge_order=2)
        inner = slice(5, -5)
        scale = np.abs(F.f_t).max()
        assert np.abs(numeric[inner] - F.f_t[inner]).max() <= 1e-4 * scale


class TestWeightedNorms:
    def test_zero_trajectory(self):
        traj = Trajectory.zeros(np.linspace(0, 1, 5), 3)
        assert e1_norm(traj, 16, 1, 2.0) == 0.0
        assert e2_norm(traj, 16, 1, 2.0) == 0.0

    @pytest.mark.parametrize("k", [4, 16, 64])
    def test_e1_controlled_by_e2(self, rng, k):
        t = np.linspace(0, 0.8, 9)
        e = np.array([random_coeffs(rng, 3) for _ in t])
        n = np.array([random_coeffs(rng, 3, real=True) for _ in t])
        traj = Trajectory(t, e, n, n, e)
        sigma = 1.7
        bound = k ** -0.25 * math.exp(sigma * t[-1]) * e2_norm(traj, k, 1, sigma)
        assert e1_norm(traj, k, 1, sigma) <= bound * (1 + 1e-12)

    def test_unstable_mode_uniform_in_k(self):
        values = []
        for k in (64, 256):
            Ua = build_unstable_mode(k, 1.0, 1)
            traj = Ua.trajectory(np.linspace(0, 3 / Ua.sigma, 301), 3)
            values.append(e1_norm(traj, k, 1, Ua.sigma))
        assert 1 / 3 <= values[1] / values[0] <= 3

    def test_time_window(self):
        Ua = build_unstable_mode(16, 1.0, 1)
        traj = Ua.trajectory(np.linspace(0, 1.0, 101), 3)
        full = weighted_norms(traj, 16, 1, Ua.sigma)
        early = weighted_norms(traj, 16, 1, Ua.sigma, T=0.5)
        assert early.E1 <= full.E1
        assert early.F2 <= full.F2
        assert set(full.to_dict()) == {"E1", "E2", "F2", "sigma", "k", "s"}

    def test_bilinear_ratio_finite(self):
        Ua = build_unstable_mode(32, 1.0, 1)
        traj = Ua.trajectory(np.linspace(0, 2 / Ua.sigma, 201), 3)
        ratio = bilinear_ratio(traj, traj, 32, 1, Ua.sigma)
        assert 0 < ratio < np.inf

    def test_measured_linear_constant(self):
        cfg = ZakharovConfig(k=16, P=3)
        Ua = build_unstable_mode(16, 1.0, 1)
        traj = Ua.trajectory(np.linspace(0, 2 / Ua.sigma, 801), 3)
        C1 = measure_C1(cfg, Ua, bilinear_forcing(traj, traj, 16))
        assert 0 < C1 < np.inf

    def test_linear_constant_stable_under_refinement(self):
        cfg = ZakharovConfig(k=16, P=3)
        Ua = build_unstable_mode(16, 1.0, 1)
        constants = []
        for samples in (401, 801):
            traj = Ua.trajectory(np.linspace(0, 2 / Ua.sigma, samples), 3)
            constants.append(measure_C1(cfg, Ua, bilinear_forcing(traj, traj, 16)))
        assert constants[1] == pytest.approx(constants[0], rel=1e-2)

    def test_bilinear_estimate_uniform_in_k(self, rng):
        s = 1
        ratios = {}
        for k in (64, 128, 256):
            sigma = build_unstable_mode(k, 1.0, 1).sigma
            ratios[k] = []
            for _ in range(100):
                U = growing_trajectory(rng, k, s, sigma)
                V = growing_trajectory(rng, k, s, sigma)
                ratios[k].append(bilinear_ratio(U, V, k, s, sigma))
        worst = max(max(values) for values in ratios.values())
        assert 0 < worst <= 10 * np.median(ratios[64])

    def test_profiles_beyond_squaring_range(self):
        k, P = 16, 2
        t = np.array([0.0, 200.0, 400.0])
        e = np.zeros((3, 2 * P + 1), dtype=complex)
        e[:, P + 1] = np.exp(t)
        zero = np.zeros_like(e)
        traj = Trajectory(t, e, zero, zero, e)
        assert e1_profile(traj, k, 1, 1.0)[-1] == pytest.approx(k ** 0.5 + k ** -0.5, rel=1e-12)
        assert e2_profile(traj, k, 1, 1.0)[-1] == pytest.approx((k + 1) * math.exp(-400.0), rel=1e-12)


class TestPicard:
    def test_converges_for_small_delta(self):
        cfg = ZakharovConfig(k=16, delta=1e-6)
        Ua = build_unstable_mode(16, 1.0, 1)
        result = picard_solve(cfg, Ua)
        assert 2 <= result.iterations < cfg.picard_max_iter
        assert result.log[-1]["relative"] < cfg.picard_tol
        assert result.warnings == []
        assert np.all(result.u.e[0] == 0) and np.all(result.u.n[0] == 0)
        assert result.u.reality_drift() < 1e-12

    def test_contraction_ratio_scales_with_delta(self):
        cfg = ZakharovConfig(k=16)
        Ua = build_unstable_mode(16, 1.0, 1)
        small = picard_solve(cfg, Ua, delta=1e-5)
        large = picard_solve(cfg, Ua, delta=1e-4)
        quotient = large.contraction_ratios[0] / small.contraction_ratios[0]
        assert 5 <= quotient <= 20

    def test_correction_scales_with_delta(self):
        cfg = ZakharovConfig(k=16)
        Ua = build_unstable_mode(16, 1.0, 1)
        a = picard_solve(cfg, Ua, delta=1e-6).log[-1]["E1"]
        b = picard_solve(cfg, Ua, delta=2e-6).log[-1]["E1"]
        assert b / a == pytest.approx(2.0, rel=1e-3)

    def test_contraction_warning_and_no_convergence(self):
        cfg = ZakharovConfig(k=16, picard_max_iter=1)
        Ua = build_unstable_mode(16, 1.0, 1)
        with pytest.warns(ContractionWarning):
            with pytest.raises(NoConvergence) as excinfo:
                picard_solve(cfg, Ua, delta=0.9, steps=200)
        assert len(excinfo.value.log) == 1

    def test_contraction_parameter(self):
        assert contraction_parameter(1e-3, 16, 2.0, 1.5) == pytest.approx(1e-3 * 0.5 * math.exp(3.0))

    def test_non_finite_iterate_stops(self, monkeypatch):
        solve = nonlinear.apply_Lk_inverse
        monkeypatch.setattr(nonlinear, "apply_Lk_inverse", lambda *args, **kwargs: solve(*args, **kwargs).scaled(np.nan))
        cfg = ZakharovConfig(k=8, delta=1e-6)
        Ua = build_unstable_mode(8, 1.0, 1)
        with pytest.raises(NoConvergence, match="non-finite") as excinfo:
            picard_solve(cfg, Ua, steps=100)
        log = excinfo.value.log
        assert len(log) == 1
        assert not math.isfinite(log[-1]["E1"])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_overflowing_iterates_do_not_converge(self):
        cfg = ZakharovConfig(k=8)
        Ua = build_unstable_mode(8, 1.0, 1)
        with pytest.warns(ContractionWarning):
            with pytest.raises(NoConvergence):
                picard_solve(cfg, Ua, delta=1.0, T=2.0, steps=400)

    def test_wave_correction_bound_stable_in_k(self):
        constants = {}
        for k in (64, 128):
            Ua = build_unstable_mode(k, 1.0, 1)
            sigma = Ua.sigma
            cfg = ZakharovConfig(k=k)
            T = min(1.0, 3.0 / sigma)
            delta = 0.5 * cfg.c0 * k ** 0.25 * math.exp(-sigma * T)
            u = picard_solve(cfg, Ua, delta=delta, T=T, steps=800).u
            weighted = sobolev_norm_coeffs(u.n, cfg.s) * k ** 0.25 * np.exp(-sigma * u.t)
            constants[k] = float(weighted.max())
        assert constants[64] > 0
        assert constants[128] <= 2 * constants[64]

    def test_tiny_delta_within_contraction_bound(self):
        k, delta = 16, 1e-12
        cfg = ZakharovConfig(k=k)
        Ua = build_unstable_mode(k, 1.0, 1)
        sigma = Ua.sigma
        u = picard_solve(cfg, Ua, delta=delta).u
        T = float(u.t[-1])
        base = Ua.trajectory(u.t, cfg.P)
        C1 = measure_C1(cfg, Ua, bilinear_forcing(base, base, k))
        C2 = bilinear_ratio(base, base, k, cfg.s, sigma)
        K = e1_norm(base, k, cfg.s, sigma)
        bound = delta * k ** -0.25 * math.exp(sigma * T) * C1 * C2 * (K + 1) ** 2
        assert 0 < e1_norm(u, k, cfg.s, sigma) <= 10 * bound


class TestEvolveDirect:
    def test_mass_conserved_without_coupling(self):
        cfg = ZakharovConfig(k=2, P=4, E_bar=0)
        e0 = FourierField.from_modes(4, {1: 0.1, 2: 0.1})
        state0 = StateU(e0, FourierField.zeros(4, True), FourierField.zeros(4, True))
        traj = evolve_direct(cfg, state0, T=1.0, dt=1e-3)
        masses = mass(traj.e)
        assert np.abs(masses - masses[0]).max() <= 1e-8 * masses[0]
        assert traj.reality_drift() < 1e-14

    def test_second_order_in_time(self):
        cfg = ZakharovConfig(k=2, P=3)
        state0 = StateU(
            FourierField.from_modes(3, {1: 0.3, -2: 0.15}),
            FourierField.from_modes(3, {1: 0.15, -1: 0.15}, is_real=True),
            FourierField.zeros(3, True),
        )
        finals = [evolve_direct(cfg, state0, T=0.5, dt=0.5 / steps).final() for steps in (200, 400, 800)]
        coarse = np.abs(finals[0].e.coeffs - finals[1].e.coeffs).max()
        fine = np.abs(finals[1].e.coeffs - finals[2].e.coeffs).max()
        assert 1.8 <= math.log2(coarse / fine) <= 2.2

    def test_linearized_growth(self):
        k, delta = 16, 1e-10
        cfg = ZakharovConfig(k=k, delta=delta)
        Ua = build_unstable_mode(k, 1.0, 1)
        sigma = Ua.sigma
        traj = evolve_direct(cfg, scaled(Ua.state(0.0, cfg.P), delta), T=2 / sigma, dt=min(0.02 / k, 0.05 / sigma))
        for i in range(len(traj)):
            t = traj.t[i]
            if t < 0.5 / sigma:
                continue
            expected = math.sqrt(math.pi) * math.sinh(sigma * t)
            assert l2_norm(traj.state(i).n) / delta == pytest.approx(expected, rel=1e-3)

    def test_agrees_with_picard(self):
        k, delta = 8, 1e-4
        cfg = ZakharovConfig(k=k, delta=delta)
        Ua = build_unstable_mode(k, 1.0, 1)
        picard = picard_solve(cfg, Ua)
        t = picard.u.t
        full = (Ua.trajectory(t, cfg.P) + picard.u).scaled(delta)
        direct = evolve_direct(cfg, full.state(0), T=t[-1], dt=t[1] - t[0])
        distance = e1_norm(direct + full.scaled(-1.0), k, cfg.s, Ua.sigma)
        assert distance <= 1e-4 * e1_norm(full, k, cfg.s, Ua.sigma)

    def test_blowup_detected(self):
        k, delta = 8, 1e-3
        cfg = ZakharovConfig(k=k, norm_ceiling=1e-3)
        Ua = build_unstable_mode(k, 1.0, 1)
        T = 3 / Ua.sigma
        with pytest.raises(BlowupDetected) as excinfo:
            evolve_direct(cfg, scaled(Ua.state(0.0, cfg.P), delta), T=T, dt=0.01 / Ua.sigma)
        assert excinfo.value.time < T
        assert excinfo.value.norm > 1e-3
        assert len(excinfo.value.partial) >= 2

    def test_step_must_resolve_growth(self):
        cfg = ZakharovConfig(k=8)
        with pytest.raises(ValueError, match="exceeds"):
            evolve_direct(cfg, StateU.zeros(cfg.P), T=1.0, dt=0.1)

    def test_explicit_limit_without_integrating_factor(self):
        cfg = ZakharovConfig(k=4, P=2, integrating_factor=False)
        with pytest.raises(ValueError, match="explicit limit"):
            evolve_direct(cfg, StateU.zeros(2), T=0.1, dt=0.01)

    def test_save_every(self, rng):
        cfg = ZakharovConfig(k=2, P=3)
        traj = evolve_direct(cfg, scaled(random_state(rng, 3), 1e-3), T=0.1, dt=1e-3, save_every=10)
        assert len(traj) == 11
        assert traj.t[-1] == pytest.approx(0.1)
