"""CODATA constants and the experimental operating point of the Ba-138 setup."""

from dataclasses import dataclass
import math

from scipy import constants as _c


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = _c.h
    hbar: float = _c.h / (2 * math.pi)
    k_B: float = _c.k
    c: float = _c.c


PHYS = PhysicalConstants()

# 1S0 <-> 3P1 transition of Ba-138
WAVELENGTH = 791.3e-9
OMEGA_A = 2 * math.pi * PHYS.c / WAVELENGTH

# all half widths, rad/s
G_MAX = 2 * math.pi * 334e3
KAPPA = 2 * math.pi * 74e3
GAMMA_ATOM = 2 * math.pi * 25e3

# N_c = N_bar / (kappa tau) ~ 20 N_bar for every reported figure
KAPPA_TAU = 0.05

# cycle endpoints of the pump/cavity program
DELTA_1 = 2 * math.pi * 0.5e6
DELTA_2 = 2 * math.pi * 1.0e6
