"""Four-stroke photonic engine and its thermodynamic ledger.

Stroke sequence at fixed reservoir temperature:

    A -> B  isochoric at omega_c1, resonant pump (superradiant reservoir)
    B -> C  isoenergetic expansion omega_c1 -> omega_c2, pump follows the cavity
    C -> D  isochoric at omega_c2, pump detuned (phase-randomized reservoir)
    D -> A  isoenergetic compression omega_c2 -> omega_c1

Sign convention: W > 0 is work done by the engine, Q > 0 is heat absorbed.
Photon numbers at the corners are n_th (A), n_sr (B), n'_sr (C), n'_th (D)
with n' omega_c2 = n omega_c1.

The cavity frequency only moves by ~1e-9 of itself during the cycle, so
every frequency is carried as an offset from omega_c1 and logarithms of
frequency ratios go through log1p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, fock
from .constants import PHYS
from .errors import DomainError, FitError, NegativeWorkError
from .reservoir import (
    AtomEnsembleSpec,
    CavityAtomParams,
    PhaseMode,
    atom_density_matrix,
    bose_temperature,
    derive,
)

STROKES = ("A->B", "B->C", "C->D", "D->A")
SUPERRADIANT_MODES = (PhaseMode.COHERENT, PhaseMode.COHERENT, PhaseMode.RANDOMIZED, PhaseMode.RANDOMIZED)
THERMAL_MODES = (PhaseMode.RANDOMIZED,) * 4


@dataclass(frozen=True)
class CycleSchedule:
    """Detuning program of the cycle; omega_c = omega_a - delta_ac."""

    delta_1: float
    delta_2: float
    omega_a: float
    n_grid: int = 101
    stroke_durations: tuple = (10e-6, 10e-6, 10e-6, 10e-6)

    def __post_init__(self):
        if self.n_grid < 2:
            raise ValueError("n_grid must be >= 2")
        if not self.delta_2 > self.delta_1:
            raise ValueError("expansion needs delta_2 > delta_1 (omega_c1 > omega_c2)")
        if not self.omega_c2 > 0:
            raise ValueError("cavity frequencies must be positive")
        if len(self.stroke_durations) != 4 or min(self.stroke_durations) <= 0:
            raise ValueError("need four positive stroke durations")

    @property
    def omega_c1(self) -> float:
        return self.omega_a - self.delta_1

    @property
    def omega_c2(self) -> float:
        return self.omega_a - self.delta_2

    @property
    def shift(self) -> float:
        """omega_c1 - omega_c2, in rad/s."""
        return self.delta_2 - self.delta_1

    @property
    def log_ratio(self) -> float:
        """ln(omega_c1 / omega_c2)."""
        return math.log1p(self.shift / self.omega_c2)

    @property
    def frequency_ratio(self) -> float:
        """omega_c1 / omega_c2."""
        return 1.0 + self.shift / self.omega_c2


@dataclass
class StrokeLedger:
    W: float
    Q: float
    dS: float
    dErgotropy: float


@dataclass
class CycleLedger:
    strokes: dict
    n_th: float
    n_sr: float
    n_th_prime: float
    n_sr_prime: float
    W_out: float
    Q_in: float
    Q_out: float
    eta: float
    T_c_sr: float
    T_c_th: float
    T_R: float
    omega_c1: float
    omega_c2: float
    pv_points: list
    negative_work: bool = False
    mode: str = "quasi_static"
    diagnostics: dict = field(default_factory=dict)

    def closure_residuals(self) -> dict:
        """Relative residuals of the cycle identities (all should be ~0)."""
        s = self.strokes
        scale_q = max(abs(self.Q_in), abs(self.W_out), 1e-300)
        scale_s = max(abs(s["B->C"].dS), abs(s["D->A"].dS), 1e-300)
        scale_ab = max(abs(s["A->B"].Q), 1e-300)
        return {
            "first_law": abs(self.W_out - (self.Q_in - self.Q_out)) / scale_q,
            "entropy_closure": abs(sum(st.dS for st in s.values())) / scale_s,
            "isochoric_return": abs(s["C->D"].Q + s["A->B"].Q) / scale_ab,
            "ergotropy_work": abs(self.W_out + s["B->C"].dErgotropy) / scale_q,
        }


def effective_cavity_temperature(n: float, n_th: float, omega_c: float) -> float:
    """n hbar omega_c / (k_B n_th ln(1 + 1/n_th)); equals T_R when n = n_th."""
    if n_th <= 0:
        raise DomainError("effective temperature undefined for n_th = 0")
    return n * PHYS.hbar * omega_c / (PHYS.k_B * n_th * math.log1p(1.0 / n_th))


def work_frequency_shift(n: float, delta_nu: float) -> float:
    """Radiation-pressure work -n h delta_nu (delta_nu < 0 on expansion)."""
    if n < 0:
        raise DomainError("photon number must be >= 0")
    return -n * PHYS.h * delta_nu


def stroke_work_isoenergetic(n_start: float, omega_start: float, omega_end: float) -> float:
    """n_start hbar omega_start ln(omega_start / omega_end) at constant n omega."""
    if omega_start <= 0 or omega_end <= 0:
        raise DomainError("frequencies must be positive")
    return n_start * PHYS.hbar * omega_start * math.log1p((omega_start - omega_end) / omega_end)


def stroke_heat_isochoric(n_before: float, n_after: float, omega_c: float) -> float:
    if omega_c <= 0:
        raise DomainError("frequency must be positive")
    return (n_after - n_before) * PHYS.hbar * omega_c


def efficiency(n_th: float, n_sr: float) -> float:
    if n_th <= 0:
        raise DomainError("n_th must be positive")
    if n_sr < n_th:
        raise NegativeWorkError(f"n_sr = {n_sr} < n_th = {n_th}")
    return 1.0 - n_th / n_sr


def _reservoir_at(params: CavityAtomParams, theta: float, mode: PhaseMode, delta_ac: float):
    spec = AtomEnsembleSpec(theta, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0)
    return derive(params.with_(delta_ac=delta_ac), atom_density_matrix(spec))


def _isoenergetic_quadrature(n_start: float, omega_start: float, offsets: np.ndarray) -> float:
    """Trapezoid estimate of -int n hbar d(omega) along n omega = const.

    ``offsets`` are omega_start - omega along the stroke.
    """
    n = n_start / (1.0 - offsets / omega_start)
    return PHYS.hbar * float(np.sum(0.5 * (n[1:] + n[:-1]) * np.diff(offsets)))


def _ledger_from_corners(n_th, n_sr, schedule: CycleSchedule, T_R, pv_points, mode, diagnostics):
    hbar = PHYS.hbar
    w1 = schedule.omega_c1
    w2 = schedule.omega_c2
    log_ratio = schedule.log_ratio
    ratio = schedule.frequency_ratio
    n_th_p = n_th * ratio
    n_sr_p = n_sr * ratio

    q_ab = stroke_heat_isochoric(n_th, n_sr, w1)
    w_bc = n_sr * hbar * w1 * log_ratio
    # (n'_th - n'_sr) hbar omega_c2 with omega_c2 * ratio = omega_c1
    q_cd = (n_th - n_sr) * hbar * w1
    w_da = -n_th * hbar * w1 * log_ratio

    # reversible heat along the isoenergetic strokes, int hbar omega dn_th
    tds_bc = n_th * hbar * w1 * log_ratio
    tds_da = -tds_bc
    ds_bc = fock.thermal_entropy_difference(n_th, n_th_p)
    ds_da = fock.thermal_entropy_difference(n_th_p, n_th)

    strokes = {
        "A->B": StrokeLedger(W=0.0, Q=q_ab, dS=0.0, dErgotropy=-q_ab),
        "B->C": StrokeLedger(W=w_bc, Q=w_bc, dS=ds_bc, dErgotropy=tds_bc - w_bc),
        "C->D": StrokeLedger(W=0.0, Q=q_cd, dS=0.0, dErgotropy=-q_cd),
        "D->A": StrokeLedger(W=w_da, Q=w_da, dS=ds_da, dErgotropy=tds_da - w_da),
    }
    # the isochoric heats cancel exactly; add them first so W_BC is not lost
    q_in = (q_ab + q_cd) + w_bc
    q_out = -w_da
    w_out = w_bc + w_da
    negative = n_sr < n_th
    if n_th > 0 and not negative:
        eta = w_out / q_in if q_in != 0 else 0.0
    else:
        eta = float("nan")
    t_sr = effective_cavity_temperature(n_sr, n_th, w1) if n_th > 0 else float("nan")
    t_th = effective_cavity_temperature(n_th, n_th, w1) if n_th > 0 else float("nan")
    return CycleLedger(
        strokes=strokes,
        n_th=n_th,
        n_sr=n_sr,
        n_th_prime=n_th_p,
        n_sr_prime=n_sr_p,
        W_out=w_out,
        Q_in=q_in,
        Q_out=q_out,
        eta=eta,
        T_c_sr=t_sr,
        T_c_th=t_th,
        T_R=T_R,
        omega_c1=w1,
        omega_c2=w2,
        pv_points=pv_points,
        negative_work=negative,
        mode=mode,
        diagnostics=diagnostics,
    )


def _pv_quasi_static(n_th, n_sr, schedule: CycleSchedule):
    grid = np.linspace(0.0, 1.0, schedule.n_grid)
    d1, d2, w1 = schedule.delta_1, schedule.delta_2, schedule.omega_c1
    offsets = grid * schedule.shift
    points = []
    for x in grid:
        points.append((d1, n_th + x * (n_sr - n_th), "A->B"))
    for off in offsets:
        points.append((d1 + off, n_sr / (1.0 - off / w1), "B->C"))
    ratio = schedule.frequency_ratio
    for x in grid:
        points.append((d2, ratio * (n_sr + x * (n_th - n_sr)), "C->D"))
    for off in offsets[::-1]:
        points.append((d1 + off, n_th / (1.0 - off / w1), "D->A"))
    return points


def run_cycle(
    params: CavityAtomParams,
    schedule: CycleSchedule,
    theta: float,
    mode: str = "quasi_static",
    superradiant: bool = True,
    dim: int = 40,
) -> CycleLedger:
    """Run one engine cycle and return its ledger.

    ``superradiant=False`` keeps the pump detuned in every stroke (thermal
    engine).  In ``dynamic`` mode the master equation is integrated through
    the stroke program with piecewise-constant generators and the corner
    photon numbers are taken from the periodic orbit.
    """
    modes = SUPERRADIANT_MODES if superradiant else THERMAL_MODES
    res_a = _reservoir_at(params, theta, modes[3], schedule.delta_1)
    res_b = _reservoir_at(params, theta, modes[0], schedule.delta_1)

    # reservoir drift across the expansion/compression strokes, not fed back
    offsets = np.linspace(0.0, schedule.shift, schedule.n_grid)
    t_r_track = []
    n_sr_track = []
    for off in offsets:
        r_coh = _reservoir_at(params, theta, modes[1], schedule.delta_1 + off)
        t_r_track.append(r_coh.T_R)
        n_sr_track.append(r_coh.n_sr)
    diagnostics = {
        "T_R_min": float(min(t_r_track)),
        "T_R_max": float(max(t_r_track)),
        "reservoir_n_sr_at_C": float(n_sr_track[-1]),
        "W_BC_quadrature": _isoenergetic_quadrature(res_b.n_sr, schedule.omega_c1, offsets),
    }

    if mode == "quasi_static":
        n_th, n_sr = res_a.n_th, res_b.n_sr
        pv = _pv_quasi_static(n_th, n_sr, schedule)
    elif mode == "dynamic":
        n_th, n_sr, pv, dyn = _dynamic_corners(params, schedule, theta, modes, dim)
        diagnostics.update(dyn)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _ledger_from_corners(n_th, n_sr, schedule, res_a.T_R, pv, mode, diagnostics)


def _stroke_generators(params, schedule, theta, modes, dim):
    """Piecewise-constant generators for each stroke as (detuning, generator, dt)."""
    n_seg = schedule.n_grid - 1
    plan = []
    for label, phase_mode, duration in zip(STROKES, modes, schedule.stroke_durations):
        spec = AtomEnsembleSpec(theta, phase_mode, 0.0 if phase_mode is PhaseMode.COHERENT else 1.0)
        atom_rho = atom_density_matrix(spec)
        if label in ("A->B", "C->D"):
            det = schedule.delta_1 if label == "A->B" else schedule.delta_2
            segs = [(det, dynamics.build_generator(params.with_(delta_ac=det), atom_rho, dim), duration)]
        else:
            lo, hi = (schedule.delta_1, schedule.delta_2) if label == "B->C" else (schedule.delta_2, schedule.delta_1)
            edges = np.linspace(lo, hi, n_seg + 1)
            segs = [
                (det, dynamics.build_generator(params.with_(delta_ac=det), atom_rho, dim), duration / n_seg)
                for det in 0.5 * (edges[1:] + edges[:-1])
            ]
        plan.append((label, segs))
    return plan


def _dynamic_corners(params, schedule, theta, modes, dim, max_cycles=20, tol=1e-7):
    """Corner photon numbers of the periodic orbit under finite stroke times.

    The field starts in the steady state of the last D->A segment and the
    cycle is repeated until the corner photon numbers stop changing.
    """
    plan = _stroke_generators(params, schedule, theta, modes, dim)
    rho = dynamics.steady_state_numeric(plan[3][1][-1][1])
    previous = None
    for cycle in range(1, max_cycles + 1):
        pv = []
        corners = [fock.mean_photon_number(rho)]
        for label, segs in plan:
            for det, gen, dt in segs:
                n_grid = schedule.n_grid if len(segs) == 1 else 2
                ts = np.linspace(0.0, dt, n_grid)
                evo = dynamics.evolve(gen, rho, dt, sample_times=ts)
                rho = evo.states[-1]
                if len(segs) == 1:
                    pv.extend((det, n, label) for n in evo.photon_numbers())
                else:
                    pv.append((det, fock.mean_photon_number(rho), label))
            corners.append(fock.mean_photon_number(rho))
        current = np.array(corners)
        if previous is not None and np.max(np.abs(current - previous)) <= tol * current.max():
            break
        previous = current

    # relaxation of the A->B stroke from the thermal corner
    det, gen_ab, dt = plan[0][1][0]
    start = dynamics.steady_state_numeric(plan[3][1][-1][1])
    target = fock.mean_photon_number(dynamics.steady_state_numeric(gen_ab))
    horizon = 30.0 / (gen_ab.rate_down - gen_ab.rate_up)
    ts = np.linspace(0.0, horizon, 3001)
    ns = dynamics.evolve(gen_ab, start, horizon, sample_times=ts).photon_numbers()
    gap = np.abs(ns - target) / abs(target - ns[0])
    settle = ts[np.argmax(gap <= 0.01)] if np.any(gap <= 0.01) else float("nan")
    one_over_e = ts[np.argmax(gap <= math.exp(-1))] if np.any(gap <= math.exp(-1)) else float("nan")
    diag = {
        "cycles_to_periodic": cycle,
        "corner_photon_numbers": [float(c) for c in current[:4]],
        "settle_time_1pct_s": float(settle),
        "relaxation_time_1e_s": float(one_over_e),
        "inverse_Gamma_r_s": 1.0 / (gen_ab.rate_down - gen_ab.rate_up),
    }
    return float(current[0]), float(current[1]), pv, diag


def scaling_sweep(params: CavityAtomParams, theta: float, N_bar_values, schedule: CycleSchedule):
    """W_out versus N_bar at fixed theta and its log-log slope.

    Returns (N_bar array, W_out array, slope).
    """
    ns = np.asarray(N_bar_values, dtype=float)
    if ns.size < 3:
        raise FitError("need at least three sweep points")
    if np.ptp(np.log(ns)) == 0:
        raise FitError("degenerate sweep: all N_bar values equal")
    works = np.array([run_cycle(params.with_(N_bar=n), schedule, theta).W_out for n in ns])
    if np.any(works <= 0):
        raise FitError("non-positive work in sweep; cannot fit a power law")
    slope = float(np.polyfit(np.log(ns), np.log(works), 1)[0])
    return ns, works, slope


def ergotropy_ledger(cycle: CycleLedger, atom_rho_by_stroke: dict) -> dict:
    """Per-stroke ergotropy transfer plus reservoir coherence diagnostics.

    The reservoir's relative entropy of coherence is per injected atom;
    T_R * dC is reported next to the ledger's dErgotropy for comparison only.
    """
    out = {}
    coherence = {label: fock.relative_entropy_of_coherence(rho) for label, rho in atom_rho_by_stroke.items()}
    labels = list(STROKES)
    for i, label in enumerate(labels):
        prev = labels[i - 1]
        d_c = coherence.get(label, 0.0) - coherence.get(prev, 0.0)
        out[label] = {
            "dErgotropy_J": cycle.strokes[label].dErgotropy,
            "coherence_per_atom": coherence.get(label, 0.0),
            "T_R_dC_per_atom_J": PHYS.k_B * cycle.T_R * d_c,
        }
    hbar_w1 = PHYS.hbar * cycle.omega_c1
    alpha_sq = cycle.n_sr - cycle.n_th
    if alpha_sq > 0:
        dim = max(40, int(alpha_sq + cycle.n_th + 12 * math.sqrt(alpha_sq + cycle.n_th + 1)) + 20)
        state_b = fock.displaced_thermal_state(math.sqrt(alpha_sq), cycle.n_th, dim)
        out["engine_ergotropy_B_J"] = fock.ergotropy(state_b, hbar_w1)
    else:
        out["engine_ergotropy_B_J"] = 0.0
    out["net_work_from_ergotropy_J"] = -cycle.strokes["B->C"].dErgotropy
    return out


def cycle_atom_states(theta: float, superradiant: bool = True) -> dict:
    modes = SUPERRADIANT_MODES if superradiant else THERMAL_MODES
    return {
        label: atom_density_matrix(AtomEnsembleSpec(theta, m, 0.0 if m is PhaseMode.COHERENT else 1.0))
        for label, m in zip(STROKES, modes)
    }


def temperature_sweep(params: CavityAtomParams, theta: float, N_bar_values, schedule: CycleSchedule):
    """Rows of (N_bar, T_c_sr, T_c_th, T_R) at fixed theta."""
    rows = []
    for n in N_bar_values:
        led = run_cycle(params.with_(N_bar=float(n)), schedule, theta)
        rows.append((float(n), led.T_c_sr, led.T_c_th, led.T_R))
    return rows


def efficiency_sweep(params: CavityAtomParams, theta: float, N_bar_values, schedule: CycleSchedule):
    rows = []
    for n in N_bar_values:
        led = run_cycle(params.with_(N_bar=float(n)), schedule, theta)
        rows.append((float(n), led.eta))
    return rows


def bose_temperature_at(n: float, omega: float) -> float:
    return bose_temperature(n, omega)
