"""Atomic-beam plus photonic-vacuum reservoir.

Closed-form quantities of the coarse-grained reservoir seen by the cavity
mode: atom preparation, thermal photon number, reservoir decay rate, the
coherent drive carried by the atomic off-diagonal element, and the
effective reservoir temperature.

Atom density matrices are 2x2 arrays in the basis (|g>, |e>), so
``rho[1, 1]`` is rho_ee and ``rho[1, 0]`` is rho_eg.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import bisect

from . import constants
from .constants import PHYS
from .errors import DomainError, MasingThresholdError

MARKOV_WARN_GTAU = 0.3


class PhaseMode(str, enum.Enum):
    COHERENT = "coherent"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class CavityAtomParams:
    """Cavity/atom parameters, all rates in rad/s (half widths).

    ``drive_sinc_half`` switches the drive prefactor from sinc(delta*tau) to
    sinc(delta*tau/2), the form produced by a first-order transit integral.
    """

    g: float
    kappa: float
    tau: float
    N_bar: float
    omega_a: float = constants.OMEGA_A
    delta_ac: float = 0.0
    gamma_atom: float = constants.GAMMA_ATOM
    drive_sinc_half: bool = False

    def __post_init__(self):
        for name in ("g", "kappa", "tau", "omega_a"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.N_bar < 0:
            raise DomainError("N_bar must be >= 0")
        if self.g * self.tau > MARKOV_WARN_GTAU:
            warnings.warn(
                f"g*tau = {self.g * self.tau:.3f} > {MARKOV_WARN_GTAU}: "
                "outside the Markovian reservoir regime",
                stacklevel=3,
            )

    @property
    def g_tau(self) -> float:
        return self.g * self.tau

    @property
    def kappa_tau(self) -> float:
        return self.kappa * self.tau

    def with_(self, **changes) -> "CavityAtomParams":
        return replace(self, **changes)


def experiment_params(
    g_tau: float,
    N_bar: float,
    delta_ac: float = 0.0,
    kappa: float = constants.KAPPA,
    kappa_tau: float = constants.KAPPA_TAU,
    **kwargs,
) -> CavityAtomParams:
    """Parameters at a quoted (g tau, N_bar) with the transit time fixed by kappa tau.

    The coupling g is lowered below its maximum by moving the injection
    point across the mode, so g = g_tau / tau.
    """
    tau = kappa_tau / kappa
    return CavityAtomParams(
        g=g_tau / tau, kappa=kappa, tau=tau, N_bar=N_bar, delta_ac=delta_ac, **kwargs
    )


@dataclass(frozen=True)
class AtomEnsembleSpec:
    theta: float
    phase_mode: PhaseMode = PhaseMode.COHERENT
    pump_detuning: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phase_mode", PhaseMode(self.phase_mode))
        if not 0.0 <= self.theta <= math.pi:
            raise DomainError(f"theta must lie in [0, pi], got {self.theta}")
        if self.phase_mode is PhaseMode.COHERENT and self.pump_detuning != 0.0:
            raise DomainError("a coherent reservoir needs a resonant pump")


@dataclass(frozen=True)
class ReservoirDerived:
    rho_ee: float
    rho_gg: float
    rho_eg: complex
    gamma_inj: float
    n_th: float
    Gamma_r: float
    lambda_drive: complex
    T_R: float

    @property
    def rate_up(self) -> float:
        return self.Gamma_r * self.n_th

    @property
    def rate_down(self) -> float:
        return self.Gamma_r * (self.n_th + 1.0)

    @property
    def alpha(self) -> complex:
        return -2j * self.lambda_drive / self.Gamma_r

    @property
    def n_sr(self) -> float:
        return self.n_th + abs(self.alpha) ** 2


def sinc(x: float) -> float:
    """Unnormalized sin(x)/x."""
    return float(np.sinc(x / math.pi))


def atom_amplitudes(theta: float, phase: float = 0.0) -> np.ndarray:
    """(c_g, c_e) of sin(theta/2)|g> + cos(theta/2) e^{-i phase}|e>."""
    return np.array([math.sin(theta / 2), math.cos(theta / 2) * np.exp(-1j * phase)])


def atom_density_matrix(spec: AtomEnsembleSpec) -> np.ndarray:
    c = atom_amplitudes(spec.theta)
    rho = np.outer(c, c.conj())
    if spec.phase_mode is PhaseMode.RANDOMIZED:
        rho = np.diag(rho.diagonal())
    return rho


def injection_rate(params: CavityAtomParams) -> float:
    return params.N_bar / params.tau


def _single_atom_gain(params: CavityAtomParams) -> float:
    """gamma_inj (g tau)^2 sinc^2(delta tau / 2)."""
    return injection_rate(params) * params.g_tau**2 * sinc(params.delta_ac * params.tau / 2) ** 2


def _populations(atom_rho) -> tuple[float, float]:
    atom_rho = np.asarray(atom_rho)
    return float(atom_rho[1, 1].real), float(atom_rho[0, 0].real)


def reservoir_rate(params: CavityAtomParams, atom_rho) -> float:
    rho_ee, rho_gg = _populations(atom_rho)
    rate = (rho_gg - rho_ee) * _single_atom_gain(params) + 2 * params.kappa
    if rate <= 0:
        raise MasingThresholdError(
            f"atomic gain exceeds cavity loss (Gamma_r = {rate:.4g} rad/s)"
        )
    return rate


def thermal_photon_number(params: CavityAtomParams, atom_rho) -> float:
    rho_ee, _ = _populations(atom_rho)
    return rho_ee * _single_atom_gain(params) / reservoir_rate(params, atom_rho)


def drive_amplitude(params: CavityAtomParams, atom_rho) -> complex:
    """Coefficient lambda of a^dag in H/hbar = lambda a^dag + h.c."""
    rho_eg = complex(np.asarray(atom_rho)[1, 0])
    x = params.delta_ac * params.tau
    s = sinc(x / 2) if params.drive_sinc_half else sinc(x)
    return injection_rate(params) * s * params.g_tau * rho_eg * np.exp(-0.5j * x)


def bose_temperature(n: float, omega: float) -> float:
    """Temperature of a Bose-Einstein mode at omega with occupation n."""
    if n < 0:
        raise DomainError("occupation must be >= 0")
    if n == 0:
        return 0.0
    return PHYS.hbar * omega / (PHYS.k_B * math.log1p(1.0 / n))


def bose_occupation(T: float, omega: float) -> float:
    if T <= 0:
        return 0.0
    return 1.0 / math.expm1(PHYS.hbar * omega / (PHYS.k_B * T))


def reservoir_temperature(params: CavityAtomParams, atom_rho) -> float:
    return bose_temperature(thermal_photon_number(params, atom_rho), params.omega_a)


def reservoir_temperature_expanded(params: CavityAtomParams, atom_rho) -> float:
    """Same temperature written through populations and loss directly."""
    rho_ee, rho_gg = _populations(atom_rho)
    reservoir_rate(params, atom_rho)
    if rho_ee == 0 or params.N_bar == 0:
        return 0.0
    arg = rho_gg / rho_ee + 2 * params.kappa / (rho_ee * _single_atom_gain(params))
    return PHYS.hbar * params.omega_a / (PHYS.k_B * math.log(arg))


def atoms_per_decay_time(params: CavityAtomParams) -> float:
    return params.N_bar / (params.kappa * params.tau)


def derive(params: CavityAtomParams, atom_rho) -> ReservoirDerived:
    rho_ee, rho_gg = _populations(atom_rho)
    n_th = thermal_photon_number(params, atom_rho)
    return ReservoirDerived(
        rho_ee=rho_ee,
        rho_gg=rho_gg,
        rho_eg=complex(np.asarray(atom_rho)[1, 0]),
        gamma_inj=injection_rate(params),
        n_th=n_th,
        Gamma_r=reservoir_rate(params, atom_rho),
        lambda_drive=drive_amplitude(params, atom_rho),
        T_R=bose_temperature(n_th, params.omega_a),
    )


def theta_for_population(rho_ee: float) -> float:
    return 2 * math.acos(math.sqrt(min(max(rho_ee, 0.0), 1.0)))


def calibrate_theta(params: CavityAtomParams, T_R: float, xtol: float = 1e-10) -> float:
    """Pump angle theta whose reservoir temperature equals T_R.

    Bisection on theta over the part of (0, pi) below the masing threshold;
    the thermal photon number is monotone in rho_ee = cos^2(theta/2) there.
    """
    if T_R <= 0:
        raise DomainError("target temperature must be positive")
    gain = _single_atom_gain(params)
    if gain == 0:
        raise DomainError("no atoms: reservoir temperature is identically zero")
    target = bose_occupation(T_R, params.omega_a)

    def excess(theta: float) -> float:
        rho_ee = math.cos(theta / 2) ** 2
        denom = (1 - 2 * rho_ee) * gain + 2 * params.kappa
        if denom <= 0:
            return math.inf
        return rho_ee * gain / denom - target

    if gain < 2 * params.kappa:
        # full inversion stays below threshold
        theta_lo = 0.0
        if excess(0.0) < 0:
            raise DomainError(f"T_R = {T_R} K unreachable even with fully inverted atoms")
    else:
        # rho_ee must stay below (gain + 2 kappa) / (2 gain)
        theta_lo = theta_for_population((gain + 2 * params.kappa) / (2 * gain)) + 1e-9
    return bisect(excess, theta_lo, math.pi, xtol=xtol, maxiter=200)
