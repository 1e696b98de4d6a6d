import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srengine import checks, dynamics, fock
from srengine.errors import (
    DegenerateSteadyStateError,
    InvalidDimensionError,
    TruncationError,
    UndefinedCorrelationError,
)
from srengine.reservoir import AtomEnsembleSpec, PhaseMode, atom_density_matrix, derive, experiment_params

KAPPA = 2 * math.pi * 74e3


def spec_rho(theta, mode="coherent"):
    mode = PhaseMode(mode)
    return atom_density_matrix(AtomEnsembleSpec(theta, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0))


def g2_closed_form(alpha_sq, n_th, gamma, tau):
    """Intensity correlation of the driven thermal mode from Gaussian moment factorization."""
    n = alpha_sq + n_th
    decay = np.exp(-gamma * np.asarray(tau) / 2)
    return 1 + (n_th**2 * decay**2 + 2 * n_th * alpha_sq * decay) / n**2


def test_generator_construction():
    p = experiment_params(0.17, 0.8)
    gen = dynamics.build_generator(p, spec_rho(1.0, "randomized"), 20)
    assert np.count_nonzero(gen.hamiltonian) == 0
    empty = dynamics.build_generator(experiment_params(0.17, 0.0), spec_rho(1.0), 20)
    assert empty.rate_up == 0.0 and empty.rate_down == pytest.approx(2 * KAPPA)
    half = dynamics.build_generator(p, spec_rho(math.pi / 2), 20)
    assert half.rate_down - half.rate_up == pytest.approx(2 * KAPPA, rel=1e-12)


def test_generator_rejects_bad_input():
    with pytest.raises(ValueError):
        dynamics.LindbladGenerator.driven(5, 0.0, rate_up=1.0, rate_down=1.0)
    with pytest.raises(ValueError):
        dynamics.LindbladGenerator(3, np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]), 0.0, 1.0)


def test_rhs_properties():
    rng = np.random.default_rng(3)
    gen = dynamics.LindbladGenerator.driven(12, 3e5 - 1e5j, 1e5, 1.5e6)
    for _ in range(5):
        m = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        rho = m @ m.conj().T
        rho /= np.trace(rho).real
        out = dynamics.apply_rhs(gen, rho)
        assert abs(np.trace(out)) < 1e-6
        assert np.max(np.abs(out - out.conj().T)) < 1e-6
    vac = dynamics.LindbladGenerator.driven(6, 0.0, 0.0, 1e6)
    assert np.max(np.abs(dynamics.apply_rhs(vac, fock.fock_state(0, 6)))) == 0.0
    with pytest.raises(InvalidDimensionError):
        dynamics.apply_rhs(vac, fock.fock_state(0, 7))


def test_rhs_vanishes_at_steady_state():
    p = experiment_params(0.17, 0.8)
    gen = dynamics.build_generator(p, spec_rho(math.pi / 2), 40)
    out = dynamics.apply_rhs(gen, dynamics.steady_state_numeric(gen))
    # in units of the field decay rate; rates are ~1e6 /s
    assert np.max(np.abs(out)) / gen.rate_down < 1e-10


def test_rhs_matches_superoperator():
    gen = dynamics.LindbladGenerator.driven(8, 2e5 + 1e5j, 2e5, 1.2e6)
    rho = fock.displaced_thermal_state(0.3 + 0.2j, 0.2, 8).matrix
    assert np.allclose((gen.superoperator @ rho.ravel()).reshape(8, 8), dynamics.apply_rhs(gen, rho), atol=1e-6)


def test_steady_state_thermal_and_driven():
    p = experiment_params(0.17, 0.8)
    rho_r = spec_rho(1.2, "randomized")
    gen = dynamics.build_generator(p, rho_r, 40)
    res = derive(p, rho_r)
    assert fock.trace_distance(dynamics.steady_state_numeric(gen), fock.thermal_state(res.n_th, 40)) < 1e-9

    rho_c = spec_rho(1.2)
    gen = dynamics.build_generator(p, rho_c, 40)
    alpha, n_th = dynamics.steady_state_analytic(p, rho_c)
    ss = dynamics.steady_state_numeric(gen)
    assert fock.trace_distance(ss, fock.displaced_thermal_state(alpha, n_th, 40)) < 1e-8
    lam = derive(p, rho_c).lambda_drive
    gamma = derive(p, rho_c).Gamma_r
    assert fock.mean_photon_number(ss) == pytest.approx(n_th + abs(2 * lam / gamma) ** 2, rel=1e-9)
    dense = dynamics.steady_state_numeric(gen, method="dense")
    assert fock.trace_distance(ss, dense) < 1e-10


def test_analytic_phase_convention():
    p = experiment_params(0.05, 1.0)
    alpha, _ = dynamics.steady_state_analytic(p, spec_rho(math.pi / 2))
    lam = derive(p, spec_rho(math.pi / 2)).lambda_drive
    assert lam.real > 0 and lam.imag == 0
    assert alpha.real == 0 and alpha.imag < 0
    alpha0, _ = dynamics.steady_state_analytic(p, spec_rho(math.pi / 2, "randomized"))
    assert alpha0 == 0


def test_degenerate_generator():
    with pytest.raises(DegenerateSteadyStateError):
        dynamics.stationary_state(np.zeros((9, 9)), 3, 1.0)


@settings(max_examples=10)
@given(st.integers(0, 2**31))
def test_analytic_numeric_agreement(seed):
    (params, rho), = checks.random_reservoir_samples(1, seed)
    gen = dynamics.build_generator(params, rho, 60)
    alpha, n_th = dynamics.steady_state_analytic(params, rho)
    assert fock.trace_distance(dynamics.steady_state_numeric(gen), fock.displaced_thermal_state(alpha, n_th, 60)) < 1e-7


def test_evolve_zero_time():
    gen = dynamics.LindbladGenerator.driven(10, 1e5, 1e4, 1e6)
    rho0 = fock.thermal_state(0.1, 10)
    evo = dynamics.evolve(gen, rho0, 0.0)
    assert evo.states[0] is rho0


def test_evolve_reaches_steady_state_with_invariants():
    p = experiment_params(0.17, 0.8)
    gen = dynamics.build_generator(p, spec_rho(1.4), 40)
    ss = dynamics.steady_state_numeric(gen)
    times = np.linspace(0, 40e-6, 41)
    evo = dynamics.evolve(gen, fock.fock_state(0, 40), times[-1], sample_times=times)
    dists = [fock.trace_distance(s, ss) for s in evo.states]
    assert dists[-1] < 1e-7
    assert np.all(np.diff(dists) <= 1e-12)
    for s in evo.states:
        assert abs(np.trace(s.matrix).real - 1) < 1e-9
        assert np.linalg.eigvalsh(s.matrix)[0] > -1e-8


def test_relaxation_time_thermal():
    p = experiment_params(0.17, 0.8)
    rho = spec_rho(1.4, "randomized")
    gen = dynamics.build_generator(p, rho, 30)
    gamma = derive(p, rho).Gamma_r
    target = derive(p, rho).n_th
    times = np.linspace(0, 3 / gamma, 3001)
    ns = dynamics.evolve(gen, fock.fock_state(0, 30), times[-1], sample_times=times).photon_numbers()
    gap = (target - ns) / target
    t_e = times[np.argmax(gap <= math.exp(-1))]
    assert t_e == pytest.approx(1 / gamma, rel=2e-3)


def test_evolve_truncation_error():
    gen = dynamics.LindbladGenerator.driven(6, 5e6, 0.0, 1e6)
    with pytest.raises(TruncationError):
        dynamics.evolve(gen, fock.fock_state(0, 6), 5e-6)


def test_g2_thermal():
    p = experiment_params(0.03, 1.5)
    rho = spec_rho(0.0, "randomized")
    gen = dynamics.build_generator(p, rho, 40)
    gamma = derive(p, rho).Gamma_r
    ss = dynamics.steady_state_numeric(gen)
    taus = np.array([0.0, 0.5, 1.0, 2.0, 8.0, 30.0]) / gamma
    g2 = dynamics.g2_correlation(gen, ss, taus)
    assert g2[0] == pytest.approx(2.0, abs=1e-3)
    assert g2[-1] == pytest.approx(1.0, abs=1e-9)
    assert g2 == pytest.approx(g2_closed_form(0.0, derive(p, rho).n_th, gamma, taus), abs=1e-8)


def test_g2_superradiant_matches_closed_form():
    n_bar = checks.coherent_ratio_n_bar(0.03)
    p = experiment_params(0.03, n_bar)
    rho = spec_rho(math.pi / 2)
    res = derive(p, rho)
    assert abs(res.alpha) ** 2 / res.n_th == pytest.approx(8.47, rel=1e-10)
    gen = dynamics.build_generator(p, rho, 40)
    ss = dynamics.steady_state_numeric(gen)
    taus = np.linspace(0, 5e-6, 11)
    g2 = dynamics.g2_correlation(gen, ss, taus)
    assert g2[0] == pytest.approx(1.20, abs=0.01)
    assert g2[0] == pytest.approx(fock.photon_statistics(ss)[1], abs=1e-9)
    assert g2 == pytest.approx(g2_closed_form(abs(res.alpha) ** 2, res.n_th, res.Gamma_r, taus), abs=1e-8)


def test_g2_coherent_flat():
    gen = dynamics.LindbladGenerator.driven(40, 4e5, 0.0, 2 * KAPPA)
    ss = dynamics.steady_state_numeric(gen)
    g2 = dynamics.g2_correlation(gen, ss, np.linspace(0, 5e-6, 6))
    assert g2 == pytest.approx(np.ones(6), abs=1e-9)


def test_g2_vacuum_undefined():
    gen = dynamics.LindbladGenerator.driven(5, 0.0, 0.0, 1e6)
    with pytest.raises(UndefinedCorrelationError):
        dynamics.g2_correlation(gen, fock.fock_state(0, 5), [0.0])
