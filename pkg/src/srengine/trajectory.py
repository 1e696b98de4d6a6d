"""Micromaser-style quantum trajectories of the cavity field.

Atoms arrive as a Poisson process.  Each one is prepared in
sin(theta/2)|g> + cos(theta/2) e^{-i phi}|e>, interacts with the mode through
the Jaynes-Cummings propagator for its transit time, and is measured in the
energy basis and discarded.  Between atoms the field decays through the jump
operator sqrt(2 kappa) a; jump times are drawn exactly by inverting the
no-jump survival probability, which is a sum of exponentials because the
no-jump evolution is diagonal in the Fock basis.

Atoms are processed one at a time with their kick placed at the middle of
the transit window, so the cavity decays for half the window on either side.

Every trajectory owns a Philox stream keyed by (seed, trajectory_index);
results never depend on scheduling.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from numba import njit

from . import dynamics, fock
from .errors import InsufficientEventsError, TruncationError
from .reservoir import (
    AtomEnsembleSpec,
    CavityAtomParams,
    PhaseMode,
    atom_amplitudes,
    injection_rate,
)

OVERLAP_WARN_FRACTION = 0.5
OVERLAP_WARN_NGTAU = 0.3


@dataclass(frozen=True)
class TrajectoryConfig:
    params: CavityAtomParams
    spec: AtomEnsembleSpec
    t_final: float
    dim: int = 20
    n_trajectories: int = 100
    seed: int = 0
    record_emissions: bool = False
    n_samples: int = 101

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two sample times")

    @property
    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_samples)


@dataclass
class EmissionRecord:
    jump_times: list = field(default_factory=list)
    atom_arrival_times: list = field(default_factory=list)
    sampled_n: list = field(default_factory=list)
    atom_excited: list = field(default_factory=list)
    t_final: float = 0.0

    @property
    def n_of_t(self) -> np.ndarray:
        return np.array([n for _, n in self.sampled_n])


def rng_stream(seed: int, trajectory_index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory."""
    key = (int(trajectory_index) << 64) | (int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    return np.random.Generator(np.random.Philox(key=key))


def sample_arrivals(gamma_inj: float, t_final: float, rng: np.random.Generator) -> np.ndarray:
    """Poisson arrival times on [0, t_final) from exponential gaps of mean 1/gamma_inj."""
    if gamma_inj < 0:
        raise ValueError("injection rate must be >= 0")
    if gamma_inj == 0 or t_final <= 0:
        return np.empty(0)
    mean = gamma_inj * t_final
    chunk = int(mean + 6 * math.sqrt(mean) + 16)
    times = np.cumsum(rng.exponential(1.0 / gamma_inj, chunk))
    while times[-1] < t_final:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / gamma_inj, chunk))
        times = np.concatenate([times, more])
    return times[times < t_final]


def jc_propagator(g: float, delta_ac: float, tau: float, dim: int) -> np.ndarray:
    """exp(-i tau [delta sigma_ee + g(sigma_+ a + sigma_- a^dag)]) on atom x field.

    Atom basis (|g>, |e>); index = atom * dim + n.
    """
    a = fock.annihilation_operator(dim).matrix
    sigma_ee = np.diag([0.0, 1.0])
    sigma_plus = np.array([[0.0, 0.0], [1.0, 0.0]])
    h = delta_ac * np.kron(sigma_ee, np.eye(dim)) + g * (
        np.kron(sigma_plus, a) + np.kron(sigma_plus.T, a.conj().T)
    )
    return expm(-1j * tau * h)


def micromaser_superoperator(params: CavityAtomParams, spec: AtomEnsembleSpec, dim: int):
    """Exact ensemble generator of the trajectory process (row-major vec).

    gamma_inj (Phi - 1) + 2 kappa D[a], where Phi is the one-atom map: the
    Jaynes-Cummings transit followed by tracing out the atom.  It keeps all
    orders in g tau, so it is the reference for trajectory statistics; the
    Lindblad generator of the dynamics module is its second-order limit.
    """
    u = jc_propagator(params.g, params.delta_ac, params.tau, dim)
    c = atom_amplitudes(spec.theta)
    block = lambda out, inp: u[out * dim:(out + 1) * dim, inp * dim:(inp + 1) * dim]
    phi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for out in range(2):
        if spec.phase_mode is PhaseMode.COHERENT:
            k = c[0] * block(out, 0) + c[1] * block(out, 1)
            phi += np.kron(k, k.conj())
        else:
            # uniform pump phase removes the g/e cross terms
            for inp in range(2):
                k = block(out, inp)
                phi += abs(c[inp]) ** 2 * np.kron(k, k.conj())
    a = fock.annihilation_operator(dim).matrix
    ada = a.conj().T @ a
    eye = np.eye(dim)
    decay = np.kron(a, a.conj()) - 0.5 * np.kron(ada, eye) - 0.5 * np.kron(eye, ada.T)
    return sp.csc_matrix(injection_rate(params) * (phi - np.eye(dim * dim)) + 2 * params.kappa * decay)


def micromaser_steady_state(params: CavityAtomParams, spec: AtomEnsembleSpec, dim: int) -> fock.FieldState:
    liou = micromaser_superoperator(params, spec, dim)
    return dynamics.stationary_state(liou, dim, 2 * params.kappa + injection_rate(params))


def micromaser_g2(params: CavityAtomParams, spec: AtomEnsembleSpec, dim: int, tau_grid) -> np.ndarray:
    liou = micromaser_superoperator(params, spec, dim)
    rho = dynamics.stationary_state(liou, dim, 2 * params.kappa + injection_rate(params))
    return dynamics.regression_g2(liou, rho, tau_grid)


_GROW = 64


@njit(cache=True)
def _append(buf, n, value):
    if n == buf.size:
        bigger = np.empty(2 * buf.size + _GROW, dtype=buf.dtype)
        bigger[:n] = buf[:n]
        buf = bigger
    buf[n] = value
    return buf


@njit(cache=True)
def _mean_n(weights, two_rates, s):
    num = 0.0
    den = 0.0
    for n in range(weights.size):
        w = weights[n] * math.exp(-two_rates[n] * s)
        num += n * w
        den += w
    return num / den


@njit(cache=True)
def _jump_delay(weights, two_rates, target, span):
    """Root of sum_n w_n exp(-2 kappa n s) = target on (0, span).

    The survival is convex and decreasing, so Newton iterates from s = 0
    approach the root monotonically from below.
    """
    s = 0.0
    for _ in range(200):
        f = -target
        df = 0.0
        for n in range(weights.size):
            e = weights[n] * math.exp(-two_rates[n] * s)
            f += e
            df -= two_rates[n] * e
        step = f / df
        s -= step
        if -step <= 1e-15 * s + 1e-30:
            break
    return min(s, span)


@njit(cache=True)
def _trajectory_kernel(u_stacked, rates, kicks, t_final, samples, c_g, c_e,
                       randomized, rng, truncation_tol):
    dim = rates.size
    two_rates = 2.0 * rates
    psi = np.zeros(dim, dtype=np.complex128)
    psi[0] = 1.0
    weights = np.empty(dim)
    joint = np.empty(2 * dim, dtype=np.complex128)
    sampled = np.empty(samples.size)
    jumps = np.empty(_GROW)
    n_jumps = 0
    excited_out = np.zeros(kicks.size, dtype=np.bool_)
    i_sample = 0
    t = 0.0
    n_bound = kicks.size + 1
    for k in range(n_bound):
        t_end = kicks[k] if k < kicks.size else t_final
        is_last = k == kicks.size
        while True:
            for n in range(dim):
                weights[n] = psi[n].real ** 2 + psi[n].imag ** 2
            r = rng.random()
            span = t_end - t
            survival = 0.0
            for n in range(dim):
                survival += weights[n] * math.exp(-two_rates[n] * span)
            if survival > r:
                while i_sample < samples.size and (
                    samples[i_sample] < t_end or (is_last and samples[i_sample] <= t_end)
                ):
                    sampled[i_sample] = _mean_n(weights, two_rates, samples[i_sample] - t)
                    i_sample += 1
                norm = math.sqrt(survival)
                for n in range(dim):
                    psi[n] *= math.exp(-rates[n] * span) / norm
                t = t_end
                break
            s_jump = _jump_delay(weights, two_rates, r, span)
            while i_sample < samples.size and samples[i_sample] <= t + s_jump:
                sampled[i_sample] = _mean_n(weights, two_rates, samples[i_sample] - t)
                i_sample += 1
            norm = 0.0
            for n in range(dim - 1):
                psi[n] = math.sqrt(n + 1.0) * psi[n + 1] * math.exp(-rates[n + 1] * s_jump)
                norm += psi[n].real ** 2 + psi[n].imag ** 2
            psi[dim - 1] = 0.0
            norm = math.sqrt(norm)
            for n in range(dim):
                psi[n] /= norm
            t += s_jump
            jumps = _append(jumps, n_jumps, t)
            n_jumps += 1
        if is_last:
            break

        ce = c_e
        if randomized:
            phase = 2.0 * math.pi * rng.random()
            ce = c_e * complex(math.cos(phase), -math.sin(phase))
        for i in range(2 * dim):
            acc_g = 0j
            acc_e = 0j
            for n in range(dim):
                acc_g += u_stacked[i, n] * psi[n]
                acc_e += u_stacked[i + 2 * dim, n] * psi[n]
            joint[i] = c_g * acc_g + ce * acc_e
        p_e = 0.0
        for n in range(dim):
            p_e += joint[dim + n].real ** 2 + joint[dim + n].imag ** 2
        excited = rng.random() < p_e
        excited_out[k] = excited
        if excited:
            scale = 1.0 / math.sqrt(p_e)
            for n in range(dim):
                psi[n] = joint[dim + n] * scale
        else:
            scale = 1.0 / math.sqrt(1.0 - p_e)
            for n in range(dim):
                psi[n] = joint[n] * scale
        top = psi[dim - 1].real ** 2 + psi[dim - 1].imag ** 2
        if top > truncation_tol:
            return sampled, jumps[:n_jumps], excited_out, k
    return sampled, jumps[:n_jumps], excited_out, -1


def run_trajectory(config: TrajectoryConfig, trajectory_index: int, propagator=None) -> EmissionRecord:
    p = config.params
    dim = config.dim
    rng = rng_stream(config.seed, trajectory_index)
    u_jc = propagator if propagator is not None else jc_propagator(p.g, p.delta_ac, p.tau, dim)

    arrivals = sample_arrivals(injection_rate(p), config.t_final, rng)
    _overlap_guard(arrivals, p)
    kicks = arrivals + 0.5 * p.tau
    kicks = kicks[kicks < config.t_final]

    c_g, c_e = atom_amplitudes(config.spec.theta)
    # rows [:2dim] act on the |g> component of the incoming atom, [2dim:] on |e>
    u_stacked = np.ascontiguousarray(np.vstack([u_jc[:, :dim], u_jc[:, dim:]]))
    samples = config.sample_times
    sampled, jumps, excited, failed_at = _trajectory_kernel(
        u_stacked,
        p.kappa * np.arange(dim, dtype=float),
        kicks,
        float(config.t_final),
        samples,
        complex(c_g),
        complex(c_e),
        config.spec.phase_mode is PhaseMode.RANDOMIZED,
        rng,
        fock.TRUNCATION_TOLERANCE,
    )
    if failed_at >= 0:
        raise TruncationError(
            f"trajectory {trajectory_index}: top Fock level populated after the atom "
            f"at t = {kicks[failed_at]:.3e} s; increase dim"
        )
    rec = EmissionRecord(t_final=config.t_final)
    rec.sampled_n = list(zip(samples.tolist(), sampled.tolist()))
    if config.record_emissions:
        rec.jump_times = jumps.tolist()
        rec.atom_arrival_times = arrivals.tolist()
        rec.atom_excited = excited[: kicks.size].tolist()
    return rec


def _overlap_guard(arrivals: np.ndarray, p: CavityAtomParams) -> None:
    if arrivals.size < 2 or p.N_bar * p.g_tau <= OVERLAP_WARN_NGTAU:
        return
    overlap = float(np.mean(np.diff(arrivals) < p.tau))
    if overlap > OVERLAP_WARN_FRACTION:
        warnings.warn(
            f"{overlap:.0%} of transit windows overlap with N_bar*g*tau = "
            f"{p.N_bar * p.g_tau:.2f}; sequential-atom model is stressed",
            stacklevel=2,
        )


def _run_chunk(args):
    config, indices = args
    u_jc = jc_propagator(config.params.g, config.params.delta_ac, config.params.tau, config.dim)
    return [run_trajectory(config, i, u_jc) for i in indices]


def run_ensemble(config: TrajectoryConfig, threads: int = 1) -> list:
    """All trajectories of ``config``, ordered by trajectory index."""
    indices = list(range(config.n_trajectories))
    if threads <= 1:
        return _run_chunk((config, indices))
    chunks = [indices[i::threads] for i in range(threads)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
    records = [None] * len(indices)
    for chunk, part in zip(chunks, parts):
        for i, rec in zip(chunk, part):
            records[i] = rec
    return records


@dataclass(frozen=True)
class EnsembleStatistics:
    times: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    n_trajectories: int


def ensemble_statistics(records) -> EnsembleStatistics:
    if len(records) < 2:
        raise ValueError("need at least two records for a standard error")
    times = np.array([t for t, _ in records[0].sampled_n])
    values = np.array([rec.n_of_t for rec in records])
    return EnsembleStatistics(
        times=times,
        mean=values.mean(axis=0),
        sem=values.std(axis=0, ddof=1) / math.sqrt(len(records)),
        n_trajectories=len(records),
    )


@dataclass(frozen=True)
class CoincidenceHistogram:
    tau: np.ndarray
    g2: np.ndarray
    err: np.ndarray
    counts: np.ndarray
    n_events: int


def g2_from_records(records, bin_width: float, max_lag: float, t_start: float = 0.0,
                    min_expected: float = 10.0) -> CoincidenceHistogram:
    """Normalized start-stop coincidence histogram of all photon pairs.

    Only the stationary segment [t_start, t_final] of each record is used.
    With the detection rate r pooled over all records, a segment of length T
    has an uncorrelated expectation of r^2 * bin_width * (T - lag) pairs per
    bin.  Pooling avoids the bias of squaring per-record rate estimates.
    """
    edges = np.arange(0.0, max_lag + 0.5 * bin_width, bin_width)
    if edges.size < 2:
        raise ValueError("max_lag must cover at least one bin")
    counts = np.zeros(edges.size - 1)
    exposure = np.zeros(edges.size - 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    n_events = 0
    total_span = 0.0
    for rec in records:
        t = np.asarray(rec.jump_times)
        t = t[t >= t_start]
        span = rec.t_final - t_start
        if span <= 0:
            continue
        n_events += t.size
        total_span += span
        exposure += bin_width * np.clip(span - centers, 0.0, None)
        for k in range(1, t.size):
            lags = t[k:] - t[:-k]
            if lags.min() >= edges[-1]:
                break
            counts += np.histogram(lags, edges)[0]
    if total_span <= 0 or n_events < 2:
        raise InsufficientEventsError(f"{n_events} detections in the stationary segment")
    expected = (n_events / total_span) ** 2 * exposure
    if expected.min() < min_expected:
        raise InsufficientEventsError(
            f"{n_events} detections give only {expected.min():.1f} expected coincidences per bin"
        )
    return CoincidenceHistogram(centers, counts / expected, np.sqrt(np.maximum(counts, 1.0)) / expected,
                                counts, n_events)


def write_event_csv(records, path, header_comment: str | None = None) -> None:
    """Event dump with columns trajectory_index, event_type, time_s."""
    events = []
    for idx, rec in enumerate(records):
        events += [(idx, "atom", t) for t in rec.atom_arrival_times]
        events += [(idx, "jump", t) for t in rec.jump_times]
    events.sort(key=lambda e: (e[0], e[2], e[1]))
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["trajectory_index", "event_type", "time_s"])
        for idx, kind, t in events:
            writer.writerow([idx, kind, f"{t:.12g}"])
