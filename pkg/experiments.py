"""
Scenario runners: dispersion audit, growth-rate fit, the desk-scale
instability family, single solves, and deterministic result emission.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.optimize import least_squares

from dispersion import (
    ClassificationError,
    SymbolPoint,
    amplification_rate,
    asymptotic_slope,
    build_A,
    discover_k0,
    eig4,
    eval_P,
    propagator,
    tau_roots,
)
from linear_solver import UnstableMode, build_unstable_mode, choose_m, p1_growth_constant, split_blocks
from nonlinear import (
    BlowupDetected,
    NoConvergence,
    bilinear_forcing,
    bilinear_ratio,
    default_steps,
    e1_norm,
    e1_profile,
    evolve_direct,
    measure_C1,
    picard_solve,
    weighted_norms,
)
from schemas import (
    DELTA_RULE,
    DispersionRow,
    ExperimentConfig,
    GrowthFit,
    Report,
    RowStatus,
    TheoremRow,
    ZakharovConfig,
)
from spectral_core import StateU, Trajectory, log_sobolev_norm_coeffs, sobolev_norm_coeffs, wavenumbers

logger = logging.getLogger(__name__)

CROSSCHECK_TOL = 1e-3
GROWTH_DELTA = 1e-10


# ============================================================================
# HELPERS
# ============================================================================

def _map_rows(fn: Callable[[int], Any], ks: List[int], workers: int) -> List[Any]:
    """Evaluate fn per k, concurrently when workers > 1, in k_list order."""
    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, ks))
    return [fn(k) for k in ks]


def l2_theta(coeffs: np.ndarray) -> np.ndarray:
    return math.sqrt(2.0 * math.pi) * sobolev_norm_coeffs(coeffs, 0.0)


def torus_measure(Z) -> float:
    """Measure of the (z, x) torus (ℝ/2πZℤ) × (ℝ/2πℤ)."""
    return (2.0 * math.pi * float(Z)) * (2.0 * math.pi)


def torus_l2_norm(coeffs: np.ndarray, Z) -> np.ndarray:
    """L² norm over the torus of v(kx - mz), i.e. √(meas/2π)·‖v‖_{L²(0,2π)}."""
    return math.sqrt(torus_measure(Z) / (2.0 * math.pi)) * l2_theta(coeffs)


def torus_log_l2_norm(coeffs: np.ndarray, Z) -> np.ndarray:
    """log of torus_l2_norm, finite for coefficients beyond the squaring range."""
    return 0.5 * math.log(torus_measure(Z)) + log_sobolev_norm_coeffs(coeffs, 0.0)


def log_sinh(x: np.ndarray) -> np.ndarray:
    """log sinh(x) for x > 0 without overflow; NaN elsewhere."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = x + np.log(-np.expm1(-2.0 * x)) - math.log(2.0)
    return np.where(x > 0, value, np.nan)


def torus_hs_norm(coeffs: np.ndarray, k: int, m: float, s: int, Z) -> np.ndarray:
    """H^s norm over the torus; harmonic p sits at (z, x)-frequency (-mp, kp)."""
    p = wavenumbers((coeffs.shape[-1] - 1) // 2).astype(float)
    weights = (1.0 + (m * p) ** 2 + (k * p) ** 2) ** s
    return np.sqrt(torus_measure(Z) * np.sum(weights * np.abs(coeffs) ** 2, axis=-1))


def scaled_state(state: StateU, delta: float) -> StateU:
    return StateU(state.e * delta, state.n * delta, state.n_t * delta, state.t)


def fit_growth_rate(t: np.ndarray, norms: np.ndarray, window: Tuple[float, float]) -> float:
    """Least-squares γ in log‖n‖ = log A + log sinh(γt) over the window."""
    lo, hi = window
    mask = (t >= lo) & (t <= hi) & (norms > 0)
    if np.count_nonzero(mask) < 3:
        raise ValueError(f"Growth window [{lo:.4g}, {hi:.4g}] holds fewer than 3 samples")
    tt, y = t[mask], np.log(norms[mask])
    guess = max(float(np.polyfit(tt, y, 1)[0]), 1e-6)

    def residuals(params):
        log_amplitude, gamma = params
        return log_amplitude + log_sinh(gamma * tt) - y

    x0 = [y[-1] - float(log_sinh(guess * tt[-1])), guess]
    result = least_squares(
        residuals, x0, bounds=([-np.inf, 1e-12], [np.inf, np.inf]), method="trf", xtol=1e-12, ftol=1e-12, max_nfev=20000
    )
    return float(result.x[1])


def dispersion_identity_error(seed: int = 0, samples: int = 100) -> float:
    """Worst relative error of the resonant-line factorization of P over random samples.

    ξ sits on a 2⁻¹² grid so that ζ = -ξ - ξ² is exact, and the shift is read
    back from the rounded τ.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        xi = np.round(rng.uniform(2.0, 1e3) * 4096.0) / 4096.0
        tau = xi * (1 + rng.uniform(-1.0, 1.0))
        shift = (tau - xi) / xi
        E_amp2 = rng.uniform(0.0, 4.0)
        value = eval_P(SymbolPoint(tau, -xi - xi * xi, xi, E_amp2))
        expected = -xi ** 5 * (shift ** 2 * (2 - shift / xi) * (2 + shift) + 2 * E_amp2 / xi)
        worst = max(worst, abs(value - expected) / max(abs(expected), 1e-300))
    return worst


def _threshold(cfg: ExperimentConfig) -> Tuple[Optional[int], Optional[str]]:
    """(k0, None), or (None, reason) when no k in range classifies."""
    try:
        return discover_k0(complex(cfg.E_bar), cfg.Z, k_max=max(cfg.k_list, default=1)), None
    except ClassificationError as exc:
        return None, str(exc)


def multiset_mismatch(a: np.ndarray, b: np.ndarray) -> float:
    """max over a of the relative distance to the nearest element of b."""
    return float(max(np.min(np.abs(b - z)) / max(abs(z), 1.0) for z in a))


# ============================================================================
# DISPERSION AUDIT
# ============================================================================

def _dispersion_row(cfg: ExperimentConfig, k: int, k0: Optional[int] = None) -> DispersionRow:
    m, _ = choose_m(k, cfg.Z)
    E = complex(cfg.E_bar)
    E_amp2 = abs(E) ** 2
    row = DispersionRow(k=k, m=float(m))
    try:
        row.amplification_rate = amplification_rate(k, E_amp2)
        row.amplification_law = abs(E) / math.sqrt(2.0) * math.sqrt(k)
        rep = replace(eig4(build_A(k, float(m), E)), k0=k0)
    except ClassificationError as exc:
        reason = "Jordan degeneracy at E_bar = 0" if E == 0 else str(exc)
        logger.warning(f"Dispersion audit k={k}: {reason}")
        row.status = RowStatus.FAILED
        row.error = reason
        return row

    roots = tau_roots(-float(m), float(k), E_amp2)
    row.sigma = rep.sigma
    row.lambdas = [[float(z.real), float(z.imag)] for z in rep.lambdas]
    row.sigma_over_sqrt_k_half = rep.sigma / (abs(E) * math.sqrt(k / 2.0))
    row.lambda1_over_2k2 = float(rep.lambdas[0].real) / (2.0 * k * k)
    row.max_root_mismatch = multiset_mismatch(rep.lambdas, roots)
    row.spectrum = rep.to_dict()
    if cfg.oracle:
        t = 1.0 / rep.sigma
        reference = linalg.expm(1j * t * rep.A)
        row.propagator_mismatch = float(np.abs(propagator(rep, t) - reference).max() / np.abs(reference).max())
    logger.info(f"Dispersion audit k={k}: sigma={rep.sigma:.6g}")
    return row


def run_dispersion_audit(cfg: ExperimentConfig) -> Report:
    """Eigen-structure of the p = 1 block across k_list plus asymptotic slopes."""
    k0, threshold_note = _threshold(cfg)
    rows = _map_rows(lambda k: _dispersion_row(cfg, k, k0), cfg.k_list, cfg.workers)
    ok = [row for row in rows if row.status == RowStatus.OK]
    warnings = [note for row in ok for note in row.spectrum.get("warnings", [])]
    if threshold_note:
        warnings.append(threshold_note)

    summary = {
        "k0": k0,
        "identity_max_error": dispersion_identity_error(cfg.seed),
        "slope_sigma": asymptotic_slope([r.k for r in ok], [r.sigma for r in ok]),
        "slope_lambda1": asymptotic_slope([r.k for r in ok], [r.lambda1_over_2k2 * 2 * r.k ** 2 for r in ok]),
        "failed": [row.k for row in rows if row.status != RowStatus.OK],
    }
    return Report(
        config=cfg.model_dump(mode="json"),
        rows=[row.model_dump(mode="json") for row in rows],
        summary=summary,
        warnings=warnings,
    )


# ============================================================================
# GROWTH FIT
# ============================================================================

def run_growth_fit(cfg: ExperimentConfig, k: int, direct: bool = True) -> GrowthFit:
    """Fit the growth of ‖n‖_{L²} for U^a and for the nonlinear flow from δU^a(0).

    Raises:
        ClassificationError: k is below the instability threshold
    """
    Ua = build_unstable_mode(k, complex(cfg.E_bar), cfg.Z)
    sigma = Ua.sigma
    window = (1.0 / sigma, 3.0 / sigma)
    t = np.linspace(0.0, window[1], 601)
    linear = Ua.trajectory(t, cfg.P)
    gamma_linear = fit_growth_rate(t, l2_theta(linear.n), window)
    fit = GrowthFit(
        k=k, sigma=sigma, window=list(window), gamma_linear=gamma_linear,
        ratio_linear=gamma_linear / sigma, delta=GROWTH_DELTA,
    )
    if not direct:
        return fit

    zcfg = cfg.run_config(k, delta=GROWTH_DELTA)
    dt = min(cfg.dt_factor / k, 0.05 / sigma)
    state0 = scaled_state(Ua.state(0.0, cfg.P), GROWTH_DELTA)
    try:
        traj = evolve_direct(zcfg, state0, window[1], dt)
    except BlowupDetected as exc:
        logger.warning(f"Growth fit k={k}: blow-up at t={exc.time:.4g}, shrinking the window")
        traj = exc.partial
        fit.blowup_time = exc.time
        window = (window[0], min(window[1], exc.time))
        fit.window = list(window)
    norms = l2_theta(traj.n) / GROWTH_DELTA
    fit.gamma_direct = fit_growth_rate(traj.t, norms, window)
    fit.ratio_direct = fit.gamma_direct / sigma
    logger.info(f"Growth fit k={k}: sigma={sigma:.6g}, linear ratio={fit.ratio_linear:.4f}, direct ratio={fit.ratio_direct:.4f}")
    return fit


# ============================================================================
# THEOREM FAMILY
# ============================================================================

def theorem_time(k: int, s: int, c0: float, sigma: float) -> float:
    """T_k = ln(c₀k^{2s+2+1/4})/σ, so that δk^{-1/4}e^{σT_k} = c₀ for δ = k^{-(2s+2)}."""
    return (math.log(c0) + math.log(k) * (2 * s + 2 + 0.25)) / sigma


def _theorem_row(cfg: ExperimentConfig, k: int, k0: Optional[int]) -> Tuple[TheoremRow, List[str]]:
    row = TheoremRow(k=k)
    notes: List[str] = []
    if k0 is not None and k < k0:
        row.status = RowStatus.FAILED
        row.error = f"k={k} is below the instability threshold k0={k0}"
        return row, notes
    try:
        zcfg = cfg.run_config(k)
        Ua = build_unstable_mode(k, zcfg.E, zcfg.Z)
        sigma, delta, m = Ua.sigma, zcfg.delta, float(zcfg.m)
        row.sigma, row.delta = sigma, delta
        T_k = theorem_time(k, zcfg.s, zcfg.c0, sigma) if cfg.delta_rule == DELTA_RULE else \
            math.log(zcfg.c0 * k ** 0.25 / delta) / sigma
        row.T_k = T_k
        if T_k <= 0:
            raise ValueError(f"T_k={T_k:.4g} is not positive; c0 k^(2s+9/4) must exceed 1")
        steps = default_steps(k, T_k, cfg.dt_factor)
        logger.info(f"Theorem k={k}: sigma={sigma:.6g}, T_k={T_k:.6g}, {steps} steps")

        picard = picard_solve(zcfg, Ua, delta=delta, T=T_k, steps=steps, workers=1)
        notes.extend(picard.warnings)
        row.picard_iterations = picard.iterations
        base = Ua.trajectory(picard.u.t, zcfg.P)
        total = base + picard.u
        full = total.scaled(delta)
        row.C1, row.C2 = measured_constants(zcfg, Ua, total)

        initial = full.state(0)
        row.initial_hs = float(np.sqrt(sum(
            torus_hs_norm(field.coeffs, k, m, zcfg.s, zcfg.Z) ** 2 for field in (initial.e, initial.n, initial.n_t)
        )))
        row.terminal_l2_n = float(torus_l2_norm(full.n[-1], zcfg.Z))
        if not (math.isfinite(row.terminal_l2_n) and math.isfinite(row.initial_hs)):
            raise ValueError(f"Non-finite norms: initial {row.initial_hs}, terminal {row.terminal_l2_n}")
        row.log_terminal_l2_n = float(torus_log_l2_norm(full.n[-1], zcfg.Z))
        row.amplification = row.terminal_l2_n / row.initial_hs if row.initial_hs else None

        direct = evolve_direct(zcfg, initial, T_k, T_k / steps)
        difference = direct + full.scaled(-1.0)
        reference = e1_norm(full, k, zcfg.s, sigma)
        row.crosscheck = e1_norm(difference, k, zcfg.s, sigma) / reference if reference else None
        if row.crosscheck is None or not math.isfinite(row.crosscheck) or row.crosscheck > CROSSCHECK_TOL:
            row.status = RowStatus.UNVERIFIED
            logger.warning(f"Theorem k={k}: cross-check distance {row.crosscheck} above {CROSSCHECK_TOL}")
    except (ClassificationError, NoConvergence, BlowupDetected, ValueError) as exc:
        logger.warning(f"Theorem k={k} failed: {exc}")
        row.status = RowStatus.FAILED
        row.error = str(exc)
    return row, notes


def run_theorem(cfg: ExperimentConfig) -> Tuple[Report, pd.DataFrame]:
    """Initial size, terminal ‖n‖ and amplification of δ(U^a + u) across k_list."""
    k0, threshold_note = _threshold(cfg)
    notes: List[str] = [threshold_note] if threshold_note else []

    results = _map_rows(lambda k: _theorem_row(cfg, k, k0), cfg.k_list, cfg.workers)
    rows = [row for row, _ in results]
    for _, row_notes in results:
        notes.extend(row_notes)

    ok = [row for row in rows if row.status != RowStatus.FAILED and row.terminal_l2_n is not None]
    summary: Dict[str, Any] = {
        "k0": k0,
        "k_quarter_fit": None,
        "C1_max": max((row.C1 for row in rows if row.C1 is not None), default=None),
        "C2_max": max((row.C2 for row in rows if row.C2 is not None), default=None),
    }
    if len(ok) >= 2:
        slope, intercept = np.polyfit([row.k ** 0.25 for row in ok], [row.terminal_l2_n for row in ok], 1)
        summary["k_quarter_fit"] = {"a": float(intercept), "b": float(slope)}
        initial = [row.initial_hs for row in ok]
        terminal = [row.terminal_l2_n for row in ok]
        summary["initial_decreasing"] = all(b < a for a, b in zip(initial, initial[1:]))
        summary["terminal_increasing"] = all(b > a for a, b in zip(terminal, terminal[1:]))

    table = pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=list(TheoremRow.model_fields))
    report = Report(
        config=cfg.model_dump(mode="json"),
        rows=[row.model_dump(mode="json") for row in rows],
        summary=summary,
        warnings=notes,
    )
    return report, table


# ============================================================================
# SINGLE SOLVE
# ============================================================================

def norm_trace(traj: Trajectory, k: int, s: int, sigma: float, delta: float = 1.0) -> pd.DataFrame:
    """Per-sample norms, their logarithms and the log δ√π sinh(σt) reference."""
    log_l2_n = 0.5 * math.log(2.0 * math.pi) + log_sobolev_norm_coeffs(traj.n, 0.0)
    return pd.DataFrame(
        {
            "t": traj.t,
            "l2_n": l2_theta(traj.n),
            "hs_n": sobolev_norm_coeffs(traj.n, s),
            "hs_e": sobolev_norm_coeffs(traj.e, s),
            "log_l2_n": log_l2_n,
            "log_hs_n": log_sobolev_norm_coeffs(traj.n, s),
            "log_hs_e": log_sobolev_norm_coeffs(traj.e, s),
            "log_sinh_fit": math.log(delta) + 0.5 * math.log(math.pi) + log_sinh(sigma * traj.t),
            "E1_partial": np.maximum.accumulate(e1_profile(traj, k, s, sigma)),
        }
    )


def block_table(traj: Trajectory, k: int) -> pd.DataFrame:
    """Long-form trajectory: t, p and re/im of every block component, p = 0..P."""
    states = split_blocks(k, traj)
    return pd.concat([states[p].to_frame() for p in sorted(states)], ignore_index=True)


def measured_constants(zcfg: ZakharovConfig, Ua: UnstableMode, total: Trajectory) -> Tuple[float, float]:
    """(C₁, C₂) measured on the forcing 𝒩_k(U, U) of U = U^a + u."""
    forcing = bilinear_forcing(total, total, zcfg.k)
    C1 = measure_C1(zcfg, Ua, forcing)
    C2 = bilinear_ratio(total, total, zcfg.k, zcfg.s, Ua.sigma)
    logger.info(f"Measured constants k={zcfg.k}: C1={C1:.4g}, C2={C2:.4g}")
    return C1, C2


def run_solve(
    zcfg: ZakharovConfig, T: Optional[float] = None, steps: Optional[int] = None
) -> Tuple[Report, Dict[str, pd.DataFrame]]:
    """Picard solve at a single k.

    Returns:
        the report (iteration log, weighted norms, measured constants) and the
        tables "norms" (per-sample norm trace) and "blocks" (per-block trajectory)
    """
    Ua: UnstableMode = build_unstable_mode(zcfg.k, zcfg.E, zcfg.Z)
    picard = picard_solve(zcfg, Ua, T=T, steps=steps)
    base = Ua.trajectory(picard.u.t, zcfg.P)
    total = base + picard.u
    full = total.scaled(zcfg.delta)
    T_end = float(picard.u.t[-1])
    norms = weighted_norms(picard.u, zcfg.k, zcfg.s, Ua.sigma)
    C1, C2 = measured_constants(zcfg, Ua, total)
    report = Report(
        config=zcfg.model_dump(mode="json"),
        rows=picard.log,
        summary={
            "sigma": Ua.sigma,
            "iterations": picard.iterations,
            "T": T_end,
            "weighted_norms_u": norms.to_dict(),
            "C1": C1,
            "C2": C2,
            "p1_growth_constant": p1_growth_constant(Ua.rep, T_end),
            "final_state": full.final().to_dict(),
        },
        warnings=picard.warnings,
    )
    tables = {
        "norms": norm_trace(full, zcfg.k, zcfg.s, Ua.sigma, zcfg.delta),
        "blocks": block_table(full, zcfg.k),
    }
    return report, tables


# ============================================================================
# EMISSION
# ============================================================================

def jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def emit(output_dir: str, name: str, report: Report, tables: Optional[Dict[str, pd.DataFrame]] = None) -> List[Path]:
    """Write {name}.json and one CSV per table; identical inputs give identical bytes.

    Raises:
        OSError: with the offending path in the message
    """
    directory = Path(output_dir)
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"Cannot create output directory {directory}: {exc}") from exc

    path = directory / f"{name}.json"
    payload = json.dumps(jsonable(report.model_dump(mode="json")), indent=2, sort_keys=True, allow_nan=False)
    try:
        path.write_text(payload + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"Cannot write {path}: {exc}") from exc
    written.append(path)

    for table_name, frame in (tables or {}).items():
        path = directory / f"{table_name}.csv"
        try:
            frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"Cannot write {path}: {exc}") from exc
        written.append(path)

    logger.info(f"Wrote {', '.join(str(p) for p in written)}")
    return written
