"""Release-gate checks shared by ``srengine selfcheck`` and the acceptance tests.

Each check returns a :class:`CheckResult`; failures are results, not
exceptions, so a report always covers every item.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
import scipy.stats
from scipy.optimize import brentq

from . import constants, dynamics, engine, fock, trajectory
from .constants import PHYS
from .errors import EngineError, MasingThresholdError
from .reservoir import (
    AtomEnsembleSpec,
    PhaseMode,
    atom_density_matrix,
    atoms_per_decay_time,
    calibrate_theta,
    derive,
    experiment_params,
)

SR_RATIO = 8.47


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: object = None
    target: str = ""
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={_fmt(self.value)} target={self.target} ({self.seconds:.1f}s)"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def default_schedule(**kw) -> engine.CycleSchedule:
    return engine.CycleSchedule(constants.DELTA_1, constants.DELTA_2, constants.OMEGA_A, **kw)


def calibrated(g_tau: float, N_bar: float, T_R: float):
    """Parameters at the stroke-A detuning and the theta giving T_R there."""
    params = experiment_params(g_tau, N_bar, delta_ac=constants.DELTA_1)
    return params, calibrate_theta(params, T_R)


def coherent_ratio_n_bar(g_tau: float, ratio: float = SR_RATIO) -> float:
    """N_bar at theta = pi/2, resonance, where |alpha|^2 / n_th equals ratio."""
    rho = atom_density_matrix(AtomEnsembleSpec(math.pi / 2))

    def excess(n_bar):
        res = derive(experiment_params(g_tau, n_bar), rho)
        return abs(res.alpha) ** 2 / res.n_th - ratio

    return brentq(excess, 1e-4, 50.0, xtol=1e-14, rtol=1e-14)


# --- criterion 1 -----------------------------------------------------------

def random_reservoir_samples(n: int, seed: int = 1, n_max: float = 3.0):
    """(params, atom_rho) pairs below threshold with steady photon number <= n_max."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        g_tau = rng.uniform(0.01, 0.25)
        n_bar = rng.uniform(0.05, 3.0)
        delta = rng.uniform(-2 * math.pi * 1.5e6, 2 * math.pi * 1.5e6)
        theta = rng.uniform(0.0, math.pi)
        mode = PhaseMode.COHERENT if rng.random() < 0.8 else PhaseMode.RANDOMIZED
        spec = AtomEnsembleSpec(theta, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params = experiment_params(g_tau, n_bar, delta_ac=delta)
        rho = atom_density_matrix(spec)
        try:
            res = derive(params, rho)
        except MasingThresholdError:
            continue
        if res.n_sr <= n_max:
            out.append((params, rho))
    return out


@_timed
def check_steady_state_oracle(n_samples: int = 20, dim: int = 60, seed: int = 1) -> CheckResult:
    worst = 0.0
    for params, rho in random_reservoir_samples(n_samples, seed):
        gen = dynamics.build_generator(params, rho, dim)
        alpha, n_th = dynamics.steady_state_analytic(params, rho)
        dist = fock.trace_distance(
            dynamics.steady_state_numeric(gen), fock.displaced_thermal_state(alpha, n_th, dim)
        )
        worst = max(worst, dist)
    res = CheckResult("1 steady-state oracle", worst < 1e-7, worst, "< 1e-7 and < 60 s")
    res.detail = {"n_samples": n_samples, "dim": dim}
    return res


# --- criterion 2 -----------------------------------------------------------

@_timed
def check_trajectory_mean(n_trajectories: int = 1000, seed: int = 11, threads: int = 1) -> CheckResult:
    params = experiment_params(0.03, 2.1)
    detail = {}
    ok = True
    for mode in (PhaseMode.COHERENT, PhaseMode.RANDOMIZED):
        spec = AtomEnsembleSpec(math.pi / 2, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0)
        target = derive(params, atom_density_matrix(spec)).n_sr
        cfg = trajectory.TrajectoryConfig(
            params, spec, t_final=12e-6, dim=18, n_trajectories=n_trajectories, seed=seed, n_samples=2
        )
        stats = trajectory.ensemble_statistics(trajectory.run_ensemble(cfg, threads=threads))
        mean, se = float(stats.mean[-1]), float(stats.sem[-1])
        z = abs(mean - target) / se
        ok &= z < 3.0
        detail[mode.value] = {"mean": mean, "stderr": se, "analytic": target, "z": z}
    worst = max(d["z"] for d in detail.values())
    return CheckResult("2 trajectory vs master equation", ok, worst, "|z| < 3 for both modes, < 300 s", detail)


# --- criterion 3 -----------------------------------------------------------

def regression_g2_zero(g_tau: float, mode: PhaseMode, dim: int = 40) -> float:
    if mode is PhaseMode.COHERENT:
        params = experiment_params(g_tau, coherent_ratio_n_bar(g_tau))
        spec = AtomEnsembleSpec(math.pi / 2)
    else:
        params = experiment_params(g_tau, 1.5)
        spec = AtomEnsembleSpec(0.0, PhaseMode.RANDOMIZED, 1.0)
    gen = dynamics.build_generator(params, atom_density_matrix(spec), dim)
    return float(dynamics.g2_correlation(gen, dynamics.steady_state_numeric(gen), [0.0])[0])


@_timed
def check_g2_regression() -> CheckResult:
    thermal = regression_g2_zero(0.03, PhaseMode.RANDOMIZED)
    coherent = regression_g2_zero(0.03, PhaseMode.COHERENT)
    ok = abs(thermal - 2.0) <= 1e-3 and abs(coherent - 1.20) <= 0.01
    return CheckResult(
        "3a g2(0) by quantum regression", ok, [thermal, coherent], "2.000 +- 0.001, 1.20 +- 0.01"
    )


def micromaser_lindblad_gap(g_tau: float, mode: PhaseMode, dim: int = 30) -> float:
    """|g2(0)| difference between the exact trajectory generator and the Lindblad form."""
    if mode is PhaseMode.COHERENT:
        params = experiment_params(g_tau, coherent_ratio_n_bar(g_tau))
        spec = AtomEnsembleSpec(math.pi / 2)
    else:
        params = experiment_params(g_tau, 1.5)
        spec = AtomEnsembleSpec(0.0, PhaseMode.RANDOMIZED, 1.0)
    exact = trajectory.micromaser_g2(params, spec, dim, [0.0])[0]
    return abs(exact - regression_g2_zero(g_tau, mode, dim))


def chi2_gate(n_bins: int, p: float = 1e-3) -> float:
    """Per-bin chi^2 exceeded with probability p under the null."""
    return float(scipy.stats.chi2.isf(p, n_bins) / n_bins)


@_timed
def check_g2_trajectory(g_tau: float = 0.17, record_time: float = 2e-3, n_trajectories: int = 400,
                        seed: int = 2024, bin_width: float = 0.1e-6, max_lag: float = 2e-6,
                        threads: int = 1) -> CheckResult:
    """Coincidence histograms of simulated photodetections.

    Each histogram is compared bin by bin with the quantum-regression g2 of
    the exact ensemble generator of the trajectory process (chi^2 per bin),
    and its first bin with the quoted g2(0) values.  The distance between
    that generator and the Lindblad form is a (g tau)^2 effect, checked at
    g tau = 0.17 and 0.03.
    """
    detail = {}
    ok = True
    cases = (
        (PhaseMode.COHERENT, AtomEnsembleSpec(math.pi / 2), coherent_ratio_n_bar(g_tau), 20, 1.2),
        (PhaseMode.RANDOMIZED, AtomEnsembleSpec(0.0, PhaseMode.RANDOMIZED, 1.0), 1.5, 30, 2.0),
    )
    for mode, spec, n_bar, dim, quoted in cases:
        params = experiment_params(g_tau, n_bar)
        res = derive(params, atom_density_matrix(spec))
        t_start = 5.0 / res.Gamma_r
        cfg = trajectory.TrajectoryConfig(
            params, spec, t_final=t_start + record_time, dim=dim, n_trajectories=n_trajectories,
            seed=seed, record_emissions=True, n_samples=2,
        )
        hist = trajectory.g2_from_records(trajectory.run_ensemble(cfg, threads=threads), bin_width, max_lag, t_start)
        exact = trajectory.micromaser_g2(params, spec, dim, hist.tau)
        chi2 = float(np.mean(((hist.g2 - exact) / hist.err) ** 2))
        first = float(hist.g2[0])
        case_ok = chi2 < chi2_gate(hist.tau.size) and abs(first - quoted) <= 0.1 and hist.n_events >= 1e5
        ok &= case_ok
        detail[mode.value] = {
            "events": hist.n_events, "g2_first_bin": first, "stderr": float(hist.err[0]),
            "exact_first_bin": float(exact[0]), "chi2_per_bin": chi2,
        }
    gaps = {
        f"{mode.value}@{gt}": micromaser_lindblad_gap(gt, mode)
        for gt in (0.17, 0.03)
        for mode in (PhaseMode.COHERENT, PhaseMode.RANDOMIZED)
    }
    for key, gap in gaps.items():
        gt = float(key.split("@")[1])
        ok &= gap < 2.5 * gt**2
    detail["regression_gap"] = gaps
    value = [detail["coherent"]["g2_first_bin"], detail["randomized"]["g2_first_bin"]]
    return CheckResult(
        "3b g2 from trajectory histograms", ok, value,
        "chi2/bin below its 0.999 quantile vs exact regression, |g2(0) - 1.2|, |g2(0) - 2.0| <= 0.1", detail,
    )


# --- criteria 4-9 ----------------------------------------------------------

SCALING_N_BAR = tuple(np.linspace(0.5, 2.5, 9))
REFERENCE_N_BAR = 2.1


@_timed
def check_work_scaling() -> CheckResult:
    """theta calibrated at the reference N_bar, then held fixed across the sweep."""
    slopes = {}
    for T_R in (3200.0, 3800.0):
        params, theta = calibrated(0.03, REFERENCE_N_BAR, T_R)
        _, _, slope = engine.scaling_sweep(params, theta, SCALING_N_BAR, default_schedule())
        slopes[T_R] = slope
    ok = all(1.85 <= s <= 2.0 for s in slopes.values())
    return CheckResult("4 work scaling slope", ok, list(slopes.values()), "in [1.85, 2.00], < 60 s", {"slopes": slopes})


def _mp_work(n_th, n_sr, schedule):
    mpmath.mp.dps = 50
    w1 = mpmath.mpf(schedule.omega_a) - mpmath.mpf(schedule.delta_1)
    w2 = mpmath.mpf(schedule.omega_a) - mpmath.mpf(schedule.delta_2)
    return (mpmath.mpf(n_sr) - mpmath.mpf(n_th)) * mpmath.mpf(PHYS.hbar) * w1 * mpmath.log(w1 / w2)


@_timed
def check_work_per_cycle() -> CheckResult:
    params, theta = calibrated(0.17, 0.8, 8000.0)
    schedule = default_schedule()
    led = engine.run_cycle(params, schedule, theta)
    exact = _mp_work(led.n_th, led.n_sr, schedule)
    rel_closed = float(abs(mpmath.mpf(led.W_out) - exact) / exact)
    delta_nu = -schedule.shift / (2 * math.pi)
    first_order = engine.work_frequency_shift(led.n_sr - led.n_th, delta_nu)
    rel_first = abs(led.W_out - first_order) / first_order
    factor = max(led.W_out / 3.3e-28, 3.3e-28 / led.W_out)
    ok = factor <= 2.0 and rel_closed <= 1e-9 and rel_first <= 1e-8
    return CheckResult(
        "5 work per cycle", ok, led.W_out, "within x2 of 3.3e-28 J; closed form 1e-9; first order 1e-8",
        {"factor": factor, "rel_closed_form": rel_closed, "rel_first_order": rel_first, "theta": theta},
    )


@_timed
def check_temperature_ratio() -> CheckResult:
    params, theta = calibrated(0.03, 2.1, 3200.0)
    led = engine.run_cycle(params, default_schedule(), theta)
    ratio = led.T_c_sr / led.T_c_th
    photon = led.n_sr / led.n_th
    ok = abs(ratio - 40.0) <= 10.0 and abs(ratio - photon) <= 1e-12 * photon
    return CheckResult(
        "6 temperature ratio", ok, ratio, "40 +- 10",
        {"n_sr/n_th": photon, "N_c": atoms_per_decay_time(params), "theta": theta},
    )


@_timed
def check_efficiency() -> CheckResult:
    params, theta = calibrated(0.03, 2.1, 3200.0)
    etas = {}
    worst_identity = 0.0
    for n_bar in (2.0, 2.1, 2.5):
        led = engine.run_cycle(params.with_(N_bar=n_bar), default_schedule(), theta)
        etas[n_bar] = led.eta
        worst_identity = max(worst_identity, abs(led.eta - engine.efficiency(led.n_th, led.n_sr)))
    ok = min(etas.values()) >= 0.95 and worst_identity <= 1e-9
    return CheckResult("7 efficiency", ok, min(etas.values()), ">= 0.95; ledger identity 1e-9",
                       {"eta": etas, "identity_error": worst_identity})


@_timed
def check_null_engine() -> CheckResult:
    worst = 0.0
    for g_tau, n_bar, T_R in ((0.17, 0.8, 8000.0), (0.03, 2.1, 3200.0)):
        params, theta = calibrated(g_tau, n_bar, T_R)
        led = engine.run_cycle(params, default_schedule(), theta, superradiant=False)
        worst = max(worst, abs(led.W_out) / abs(led.Q_in) if led.Q_in else abs(led.W_out))
    return CheckResult("8 null engine", worst < 1e-9, worst, "|W_out| / Q_in < 1e-9")


def closure_cases(include_dynamic: bool = True):
    cases = []
    for g_tau, n_bar, T_R in ((0.17, 0.8, 6200.0), (0.17, 0.8, 8000.0), (0.03, 2.1, 3200.0), (0.03, 2.5, 3800.0)):
        params, theta = calibrated(g_tau, n_bar, T_R)
        for superradiant in (True, False):
            cases.append((f"qs gt={g_tau} N={n_bar} T={T_R} sr={superradiant}",
                          engine.run_cycle(params, default_schedule(), theta, superradiant=superradiant)))
    if include_dynamic:
        params, theta = calibrated(0.17, 0.8, 8000.0)
        cases.append(("dynamic gt=0.17 N=0.8 T=8000",
                      engine.run_cycle(params, default_schedule(n_grid=21), theta, mode="dynamic", dim=30)))
    return cases


@_timed
def check_closure(include_dynamic: bool = True) -> CheckResult:
    worst = {}
    for label, led in closure_cases(include_dynamic):
        for key, val in led.closure_residuals().items():
            worst[key] = max(worst.get(key, 0.0), float(val))
    ok = all(v <= 1e-9 for v in worst.values())
    return CheckResult("9 thermodynamic closure", ok, max(worst.values()), "each residual <= 1e-9", worst)


@_timed
def check_ergotropy(n_samples: int = 50, seed: int = 5, dim: int = 60) -> CheckResult:
    rng = np.random.default_rng(seed)
    hbar_w = PHYS.hbar * constants.OMEGA_A
    worst = 0.0
    for _ in range(n_samples):
        total = rng.uniform(0.05, 3.0)
        frac = rng.uniform(0.05, 1.0)
        alpha_sq, n_th = frac * total, (1 - frac) * total
        alpha = math.sqrt(alpha_sq) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        erg = fock.ergotropy(fock.displaced_thermal_state(alpha, n_th, dim), hbar_w)
        worst = max(worst, abs(erg - hbar_w * alpha_sq) / (hbar_w * alpha_sq))
    return CheckResult("10 ergotropy oracle", worst <= 1e-6, worst, "relative error <= 1e-6")


def _within_time(res: CheckResult, limit_s: float) -> CheckResult:
    res.passed = res.passed and res.seconds < limit_s
    return res


def run_all(quick: bool = False, threads: int = 1, stream=None) -> list:
    """Run every gate; ``quick`` trims the stochastic checks."""
    results = []

    def emit(res):
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)

    emit(_within_time(check_steady_state_oracle(n_samples=5 if quick else 20), 60.0))
    emit(_within_time(check_trajectory_mean(n_trajectories=200 if quick else 1000, threads=threads), 300.0))
    emit(check_g2_regression())
    if not quick:
        emit(check_g2_trajectory(threads=threads))
    emit(_within_time(check_work_scaling(), 60.0))
    emit(check_work_per_cycle())
    emit(check_temperature_ratio())
    emit(check_efficiency())
    emit(check_null_engine())
    emit(check_closure(include_dynamic=not quick))
    emit(check_ergotropy(n_samples=10 if quick else 50))
    for res in invariant_checks():
        emit(res)
    return results


def invariant_checks() -> list:
    """Negative and determinism checks that must always hold."""
    out = []
    try:
        dynamics.LindbladGenerator.driven(10, 0.0, rate_up=2.0, rate_down=1.0)
        out.append(CheckResult("stability guard rejects rate_down < rate_up", False, "accepted"))
    except (ValueError, EngineError) as exc:
        out.append(CheckResult("stability guard rejects rate_down < rate_up", True, type(exc).__name__))

    params = experiment_params(0.03, 2.1)
    cfg = trajectory.TrajectoryConfig(params, AtomEnsembleSpec(math.pi / 2), 5e-6, dim=12,
                                      n_trajectories=20, seed=99, record_emissions=True)
    a = trajectory.ensemble_statistics(trajectory.run_ensemble(cfg))
    b = trajectory.ensemble_statistics(trajectory.run_ensemble(cfg))
    same = np.array_equal(a.mean, b.mean) and np.array_equal(a.sem, b.sem)
    out.append(CheckResult("seeded trajectories are reproducible", bool(same), bool(same)))
    return out
