import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srengine import dynamics, fock, trajectory
from srengine.errors import InsufficientEventsError
from srengine.reservoir import AtomEnsembleSpec, PhaseMode, atom_density_matrix, derive, experiment_params


def config(mode="coherent", theta=math.pi / 2, g_tau=0.03, N_bar=2.1, **kw):
    mode = PhaseMode(mode)
    spec = AtomEnsembleSpec(theta, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0)
    kw.setdefault("t_final", 12e-6)
    kw.setdefault("dim", 18)
    return trajectory.TrajectoryConfig(experiment_params(g_tau, N_bar), spec, **kw)


def test_arrivals_empty_and_deterministic():
    assert trajectory.sample_arrivals(0.0, 1e-3, trajectory.rng_stream(0, 0)).size == 0
    a = trajectory.sample_arrivals(2e7, 1e-5, trajectory.rng_stream(5, 3))
    b = trajectory.sample_arrivals(2e7, 1e-5, trajectory.rng_stream(5, 3))
    assert np.array_equal(a, b)
    assert np.all(np.diff(a) > 0) and a[-1] < 1e-5


def test_arrival_count_statistics():
    rate, t = 2e7, 5e-6
    counts = np.array([trajectory.sample_arrivals(rate, t, trajectory.rng_stream(1, i)).size for i in range(1000)])
    expected = rate * t
    assert abs(counts.mean() - expected) < 3 * math.sqrt(expected / 1000)
    assert counts.var(ddof=1) == pytest.approx(expected, rel=0.15)


def test_streams_differ():
    a = trajectory.sample_arrivals(2e7, 1e-5, trajectory.rng_stream(5, 3))
    b = trajectory.sample_arrivals(2e7, 1e-5, trajectory.rng_stream(5, 4))
    assert not np.array_equal(a, b)


def test_jc_identity_and_unitarity():
    assert np.allclose(trajectory.jc_propagator(0.0, 0.0, 1e-7, 6), np.eye(12), atol=1e-15)
    u = trajectory.jc_propagator(2e6, 3e6, 1e-7, 15)
    assert np.max(np.abs(u.conj().T @ u - np.eye(30))) < 1e-12


@given(st.floats(0.0, 3.0))
def test_jc_vacuum_rabi(g_tau):
    dim = 8
    u = trajectory.jc_propagator(g_tau / 1e-7, 0.0, 1e-7, dim)
    psi = np.zeros(2 * dim, complex)
    psi[dim] = 1.0  # |e>|0>
    out = u @ psi
    assert np.sum(np.abs(out[dim:]) ** 2) == pytest.approx(math.cos(g_tau) ** 2, abs=1e-12)


def test_no_atoms_no_jumps():
    cfg = config(N_bar=0.0, n_trajectories=3, record_emissions=True)
    for rec in trajectory.run_ensemble(cfg):
        assert rec.jump_times == [] and rec.atom_arrival_times == []
        assert np.all(rec.n_of_t == 0)


def test_record_invariants():
    rec = trajectory.run_trajectory(config(g_tau=0.17, N_bar=0.8, t_final=50e-6, dim=20, record_emissions=True), 0)
    assert len(rec.jump_times) > 0
    for series in (rec.jump_times, rec.atom_arrival_times, [t for t, _ in rec.sampled_n]):
        assert np.all(np.diff(series) > 0)
    assert len(rec.atom_excited) <= len(rec.atom_arrival_times)


def test_determinism_across_workers():
    cfg = config(n_trajectories=6, record_emissions=True, t_final=5e-6, dim=12)
    serial = trajectory.run_ensemble(cfg)
    again = trajectory.run_ensemble(cfg)
    parallel = trajectory.run_ensemble(cfg, threads=2)
    for a, b, c in zip(serial, again, parallel):
        assert a.jump_times == b.jump_times == c.jump_times
        assert a.sampled_n == b.sampled_n == c.sampled_n
        assert a.atom_arrival_times == c.atom_arrival_times


def test_compiled_kernel_matches_python(monkeypatch):
    cfg = config(mode="randomized", g_tau=0.17, N_bar=1.0, t_final=20e-6, dim=16, record_emissions=True)
    fast = trajectory.run_trajectory(cfg, 2)
    monkeypatch.setattr(trajectory, "_trajectory_kernel", trajectory._trajectory_kernel.py_func)
    slow = trajectory.run_trajectory(cfg, 2)
    assert fast.jump_times == slow.jump_times
    assert np.allclose(fast.sampled_n, slow.sampled_n, rtol=1e-14, atol=0)
    assert fast.atom_excited == slow.atom_excited


@pytest.mark.parametrize("mode", ["coherent", "randomized"])
def test_ensemble_mean_matches_master_equation(mode):
    cfg = config(mode=mode, n_trajectories=400, seed=3, n_samples=7)
    stats = trajectory.ensemble_statistics(trajectory.run_ensemble(cfg))
    target = derive(cfg.params, atom_density_matrix(cfg.spec)).n_sr
    assert abs(stats.mean[-1] - target) < 3 * stats.sem[-1]


def test_superradiant_enhancement():
    coh = trajectory.ensemble_statistics(trajectory.run_ensemble(config(n_trajectories=200, n_samples=3)))
    ran = trajectory.ensemble_statistics(trajectory.run_ensemble(config("randomized", n_trajectories=200, n_samples=3)))
    assert coh.mean[-1] > 10 * ran.mean[-1]


def test_ensemble_mean_matches_exact_generator():
    cfg = config(g_tau=0.17, N_bar=0.8, theta=1.2, dim=32, t_final=15e-6, n_trajectories=400, seed=8, n_samples=3)
    stats = trajectory.ensemble_statistics(trajectory.run_ensemble(cfg))
    exact = fock.mean_photon_number(trajectory.micromaser_steady_state(cfg.params, cfg.spec, 32))
    assert abs(stats.mean[-1] - exact) < 3 * stats.sem[-1]


@pytest.mark.parametrize("mode", ["coherent", "randomized"])
def test_exact_generator_approaches_lindblad(mode):
    theta = math.pi / 2 if mode == "coherent" else 1.0
    dists = []
    for g_tau in (0.04, 0.02, 0.01):
        cfg = config(mode=mode, theta=theta, g_tau=g_tau, N_bar=2.1)
        rho = atom_density_matrix(cfg.spec)
        lind = dynamics.steady_state_numeric(dynamics.build_generator(cfg.params, rho, 20))
        exact = trajectory.micromaser_steady_state(cfg.params, cfg.spec, 20)
        dists.append(fock.trace_distance(lind, exact))
    # the models agree to at least second order in g*tau
    assert dists[0] / dists[1] > 3.5
    assert dists[1] / dists[2] > 3.5
    assert dists[2] < 1e-4


def test_statistics_helpers():
    rec = trajectory.run_trajectory(config(n_samples=5), 0)
    stats = trajectory.ensemble_statistics([rec, rec, rec])
    assert np.all(stats.sem < 1e-15)
    with pytest.raises(ValueError):
        trajectory.ensemble_statistics([])


def test_thermal_mean_and_error_scaling():
    cfg = config("randomized", n_trajectories=1000, seed=4, n_samples=3)
    recs = trajectory.run_ensemble(cfg)
    full = trajectory.ensemble_statistics(recs)
    target = derive(cfg.params, atom_density_matrix(cfg.spec)).n_th
    assert abs(full.mean[-1] - target) < 3 * full.sem[-1]
    quarter = trajectory.ensemble_statistics(recs[:250])
    assert quarter.sem[-1] / full.sem[-1] == pytest.approx(2.0, rel=0.2)


def synthetic_poisson(rate, t_final, n_records, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_records):
        n = rng.poisson(rate * t_final)
        rec = trajectory.EmissionRecord(t_final=t_final)
        rec.jump_times = np.sort(rng.uniform(0, t_final, n)).tolist()
        out.append(rec)
    return out


def test_poisson_input_is_flat():
    recs = synthetic_poisson(2e5, 0.5, 4, 0)
    hist = trajectory.g2_from_records(recs, 1e-6, 20e-6)
    chi2 = np.mean(((hist.g2 - 1) / hist.err) ** 2)
    assert chi2 < 2.0
    assert abs(np.mean(hist.g2) - 1) < 3 * np.mean(hist.err) / math.sqrt(hist.g2.size)


def test_too_few_events():
    with pytest.raises(InsufficientEventsError):
        trajectory.g2_from_records(synthetic_poisson(100.0, 1e-3, 2, 1), 1e-6, 10e-6)


def test_overlap_warning():
    with pytest.warns(UserWarning, match="overlap"):
        trajectory.run_trajectory(config(g_tau=0.17, N_bar=4.0, dim=40, t_final=2e-6), 0)


def test_event_csv(tmp_path):
    recs = trajectory.run_ensemble(config(n_trajectories=2, record_emissions=True, g_tau=0.17, N_bar=0.8, dim=20, t_final=30e-6))
    path = tmp_path / "events.csv"
    trajectory.write_event_csv(recs, path, "config_sha256=abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_sha256=abc"
    rows = list(csv.DictReader(lines[1:]))
    assert set(rows[0]) == {"trajectory_index", "event_type", "time_s"}
    n_expected = sum(len(r.jump_times) + len(r.atom_arrival_times) for r in recs)
    assert len(rows) == n_expected
    assert {r["event_type"] for r in rows} <= {"jump", "atom"}
