"""Acceptance gates, one per criterion; each prints a single PASS/FAIL line."""

import pytest

from srengine import checks


def report(capsys, res):
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.detail


def test_c01_steady_state_matches_displaced_thermal(capsys):
    report(capsys, checks._within_time(checks.check_steady_state_oracle(), 60.0))


def test_c02_trajectory_mean_photon_number(capsys):
    report(capsys, checks._within_time(checks.check_trajectory_mean(), 300.0))


def test_c03a_regression_g2_zero(capsys):
    report(capsys, checks.check_g2_regression())


def test_c03b_trajectory_g2_histogram(capsys):
    report(capsys, checks.check_g2_trajectory())


def test_c04_work_scales_quadratically(capsys):
    report(capsys, checks._within_time(checks.check_work_scaling(), 60.0))


def test_c05_work_per_cycle(capsys):
    report(capsys, checks.check_work_per_cycle())


def test_c06_temperature_ratio(capsys):
    report(capsys, checks.check_temperature_ratio())


def test_c07_efficiency(capsys):
    report(capsys, checks.check_efficiency())


def test_c08_null_engine(capsys):
    report(capsys, checks.check_null_engine())


def test_c09_thermodynamic_closure(capsys):
    report(capsys, checks.check_closure())


def test_c10_ergotropy(capsys):
    report(capsys, checks.check_ergotropy())


@pytest.mark.parametrize("index", [0, 1])
def test_invariants(capsys, index):
    report(capsys, checks.invariant_checks()[index])
