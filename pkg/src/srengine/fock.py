"""Truncated Fock-space algebra for a single cavity mode.

States are density matrices on |0>..|dim-1>.  Constructors never grow the
space on their own; a state whose top level carries more than
``TRUNCATION_TOLERANCE`` population is returned with
``truncation_safe = False`` and it is up to the caller to pick a larger dim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    DomainError,
    InvalidDimensionError,
    InvalidStateError,
    UndefinedCorrelationError,
)

DEFAULT_DIM = 60
TRUNCATION_TOLERANCE = 1e-8

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
EIGEN_TOL = 1e-10


@dataclass(frozen=True)
class FieldOperator:
    dim: int
    matrix: np.ndarray

    @property
    def dag(self) -> "FieldOperator":
        return FieldOperator(self.dim, self.matrix.conj().T)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Density matrix of the cavity mode.

    Validated on construction: Hermitian, unit trace and positive
    semidefinite within the module tolerances.
    """

    matrix: np.ndarray
    truncation_safe: bool = field(init=False)

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
        if rho.shape[0] < 2:
            raise InvalidDimensionError("Fock truncation needs dim >= 2")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace {tr!r} differs from 1")
        if np.linalg.eigvalsh(rho)[0] < -EIGEN_TOL:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)
        object.__setattr__(
            self, "truncation_safe", rho[-1, -1].real < TRUNCATION_TOLERANCE
        )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    @classmethod
    def from_unnormalized(cls, matrix) -> "FieldState":
        """Hermitize and renormalize a numerically drifted matrix."""
        rho = np.asarray(matrix, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
        return cls(rho / np.trace(rho).real)


def _check_dim(dim: int) -> None:
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"dim must be an integer >= 2, got {dim!r}")


def annihilation_operator(dim: int) -> FieldOperator:
    _check_dim(dim)
    return FieldOperator(dim, np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex))


def number_operator(dim: int) -> FieldOperator:
    _check_dim(dim)
    return FieldOperator(dim, np.diag(np.arange(dim)).astype(complex))


def fock_state(n: int, dim: int = DEFAULT_DIM) -> FieldState:
    _check_dim(dim)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return FieldState(rho)


def pure_state(psi) -> FieldState:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return FieldState(np.outer(psi, psi.conj()))


def thermal_populations(n_th: float, dim: int) -> np.ndarray:
    """Bose-Einstein populations renormalized over the truncated space."""
    if n_th < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_th}")
    _check_dim(dim)
    if n_th == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    ratio = n_th / (n_th + 1.0)
    p = ratio ** np.arange(dim)
    return p / p.sum()


def thermal_state(n_th: float, dim: int = DEFAULT_DIM) -> FieldState:
    return FieldState(np.diag(thermal_populations(n_th, dim)).astype(complex))


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    a = annihilation_operator(dim).matrix
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def displaced_thermal_state(alpha: complex, n_th: float, dim: int = DEFAULT_DIM) -> FieldState:
    """D(alpha) rho_th D(alpha)^dagger, the thermal coherent state.

    The exponential of a truncated a^dag is wrong near the top levels, so the
    state is built in a space twice as large and then projected onto the
    first ``dim`` levels and renormalized.
    """
    if alpha == 0:
        return thermal_state(n_th, dim)
    work = 2 * dim
    rho_th = np.diag(thermal_populations(n_th, work)).astype(complex)
    d = displacement_operator(alpha, work)
    rho = (d @ rho_th @ d.conj().T)[:dim, :dim]
    rho = 0.5 * (rho + rho.conj().T)
    return FieldState(rho / np.trace(rho).real)


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, FieldState) else np.asarray(rho, dtype=complex)


def _entropy_of_spectrum(p: np.ndarray) -> float:
    if p.min() < -EIGEN_TOL:
        raise InvalidStateError(f"eigenvalue {p.min():.3e} below clipping threshold")
    p = np.clip(p, 0.0, None)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def von_neumann_entropy(rho) -> float:
    """-tr(rho ln rho) in units of k_B."""
    return _entropy_of_spectrum(np.linalg.eigvalsh(_as_matrix(rho)))


def thermal_entropy(n_th: float) -> float:
    """Entropy of a thermal (or displaced thermal) mode with occupation n_th."""
    if n_th < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_th}")
    if n_th == 0:
        return 0.0
    return float((n_th + 1) * np.log1p(n_th) - n_th * np.log(n_th))


def thermal_entropy_difference(n_from: float, n_to: float) -> float:
    """thermal_entropy(n_to) - thermal_entropy(n_from) without cancellation.

    Needed for isoenergetic strokes where the occupation changes by a
    relative amount of order 1e-9.
    """
    if n_from < 0 or n_to < 0:
        raise DomainError("mean occupation must be >= 0")
    if n_from == 0 or n_to == 0:
        return thermal_entropy(n_to) - thermal_entropy(n_from)
    dn = n_to - n_from
    up = dn * np.log1p(n_to) + (n_from + 1) * np.log1p(dn / (n_from + 1))
    down = dn * np.log(n_to) + n_from * np.log1p(dn / n_from)
    return float(up - down)


def mean_photon_number(rho) -> float:
    m = _as_matrix(rho)
    return float(np.dot(np.arange(m.shape[0]), m.diagonal().real))


def photon_statistics(rho) -> tuple[float, float]:
    """Return (<a^dag a>, g2(0)) from the photon-number distribution."""
    p = _as_matrix(rho).diagonal().real
    n = np.arange(p.size)
    n_mean = float(np.dot(n, p))
    if n_mean <= 0:
        raise UndefinedCorrelationError("g2 undefined for the vacuum")
    return n_mean, float(np.dot(n * (n - 1), p) / n_mean**2)


def g2_displaced_thermal(alpha_sq: float, n_th: float) -> float:
    """Closed-form g2(0) of a displaced thermal state."""
    n = alpha_sq + n_th
    if n <= 0:
        raise UndefinedCorrelationError("g2 undefined for the vacuum")
    return 1.0 + (n_th**2 + 2 * n_th * alpha_sq) / n**2


def ergotropy(rho, hbar_omega: float) -> float:
    """Maximum unitarily extractable energy for H = hbar_omega a^dag a.

    Energy minus that of the passive state, which pairs the eigenvalues of
    rho in descending order with the ladder energies in ascending order.
    """
    m = _as_matrix(rho)
    levels = np.arange(m.shape[0]) * hbar_omega
    energy = float(np.dot(levels, m.diagonal().real))
    r = np.sort(np.clip(np.linalg.eigvalsh(m), 0.0, None))[::-1]
    return max(energy - float(np.dot(r, levels)), 0.0)


def relative_entropy_of_coherence(rho) -> float:
    """S(dephased rho) - S(rho) in the energy eigenbasis (the matrix basis)."""
    m = _as_matrix(rho)
    return _entropy_of_spectrum(m.diagonal().real) - von_neumann_entropy(m)


def trace_distance(rho, sigma) -> float:
    diff = _as_matrix(rho) - _as_matrix(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))
