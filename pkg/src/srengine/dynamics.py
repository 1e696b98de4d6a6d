"""Lindblad dynamics of the cavity field in contact with the atomic reservoir.

Superoperators act on row-major vectorized density matrices, for which
vec(A rho B) = (A kron B^T) vec(rho).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply, splu

from . import fock
from .errors import (
    DegenerateSteadyStateError,
    InvalidDimensionError,
    InvalidStateError,
    StepSizeUnderflowError,
    TruncationError,
    UndefinedCorrelationError,
)
from .fock import FieldState
from .reservoir import CavityAtomParams, derive

TRACE_RENORM_TOL = 1e-9
# integration noise on near-zero eigenvalues below this is clipped, beyond it raises
POSITIVITY_REPAIR_TOL = 1e-8
# elementwise absolute error relative to tol; keeps eigenvalues above -1e-10
ABS_TOL_FACTOR = 1e-3


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """d rho/dt = -i[H, rho] + rate_up L[a^dag] rho + rate_down L[a] rho.

    ``hamiltonian`` is H/hbar in rad/s.
    """

    dim: int
    hamiltonian: np.ndarray
    rate_up: float
    rate_down: float

    def __post_init__(self):
        if not self.rate_down > self.rate_up >= 0:
            raise ValueError(
                f"unstable generator: need rate_down > rate_up >= 0, "
                f"got {self.rate_down!r}, {self.rate_up!r}"
            )
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (self.dim, self.dim):
            raise InvalidDimensionError("hamiltonian shape does not match dim")
        scale = max(1.0, float(np.max(np.abs(h))))
        if np.max(np.abs(h - h.conj().T)) > 1e-12 * scale:
            raise ValueError("hamiltonian is not Hermitian")
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)

    @classmethod
    def driven(cls, dim: int, lambda_drive: complex, rate_up: float, rate_down: float):
        a = fock.annihilation_operator(dim).matrix
        h = lambda_drive * a.conj().T + np.conj(lambda_drive) * a
        return cls(dim, h, rate_up, rate_down)

    @cached_property
    def _a(self) -> np.ndarray:
        return fock.annihilation_operator(self.dim).matrix

    @cached_property
    def superoperator(self) -> sp.csc_matrix:
        d = self.dim
        eye = sp.identity(d, dtype=complex, format="csr")
        a = sp.csr_matrix(self._a)
        ad = sp.csr_matrix(self._a.conj().T)
        h = sp.csr_matrix(self.hamiltonian)

        def dissipator(c, cd):
            cdc = cd @ c
            return sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)

        liou = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
        liou = liou + self.rate_up * dissipator(ad, a) + self.rate_down * dissipator(a, ad)
        return sp.csc_matrix(liou)


def build_generator(params: CavityAtomParams, atom_rho, dim: int = fock.DEFAULT_DIM) -> LindbladGenerator:
    res = derive(params, atom_rho)
    return LindbladGenerator.driven(dim, res.lambda_drive, res.rate_up, res.rate_down)


def _lindblad_term(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cd = c.conj().T
    cdc = cd @ c
    return c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)


def apply_rhs(gen: LindbladGenerator, rho) -> np.ndarray:
    """Right-hand side of the master equation in matrix form."""
    m = rho.matrix if isinstance(rho, FieldState) else np.asarray(rho, dtype=complex)
    if m.shape != (gen.dim, gen.dim):
        raise InvalidDimensionError(f"state dim {m.shape} does not match generator dim {gen.dim}")
    a = gen._a
    h = gen.hamiltonian
    return (
        -1j * (h @ m - m @ h)
        + gen.rate_up * _lindblad_term(a.conj().T, m)
        + gen.rate_down * _lindblad_term(a, m)
    )


@dataclass(frozen=True)
class Evolution:
    times: np.ndarray
    states: list

    def photon_numbers(self) -> np.ndarray:
        return np.array([fock.mean_photon_number(s) for s in self.states])


def _guard(matrix: np.ndarray, t: float) -> FieldState:
    matrix = 0.5 * (matrix + matrix.conj().T)
    drift = abs(np.trace(matrix).real - 1.0)
    if drift > TRACE_RENORM_TOL:
        raise InvalidStateError(f"trace drifted by {drift:.2e} at t = {t:.3e} s")
    w, v = np.linalg.eigh(matrix)
    if w[0] < -POSITIVITY_REPAIR_TOL:
        raise InvalidStateError(f"eigenvalue {w[0]:.2e} at t = {t:.3e} s")
    if w[0] < -fock.EIGEN_TOL:
        matrix = (v * np.clip(w, 0.0, None)) @ v.conj().T
    state = FieldState.from_unnormalized(matrix)
    if not state.truncation_safe:
        raise TruncationError(f"top Fock level populated at t = {t:.3e} s; increase dim")
    return state


def evolve(
    gen: LindbladGenerator,
    rho0: FieldState,
    t_final: float,
    tol: float = 1e-9,
    sample_times=None,
) -> Evolution:
    """Integrate the master equation with an adaptive explicit Runge-Kutta pair.

    Samples are returned at ``sample_times`` (default: 0 and t_final).
    Every sample is Hermitized and renormalized; trace drift above 1e-9
    raises.  Eigenvalues in (-1e-8, -1e-10) left by the integrator are
    clipped to zero, anything more negative raises.
    """
    if rho0.dim != gen.dim:
        raise InvalidDimensionError("initial state dim does not match generator")
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if sample_times is None:
        sample_times = [0.0, t_final] if t_final > 0 else [0.0]
    times = np.asarray(sample_times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > t_final or np.any(np.diff(times) < 0)):
        raise ValueError("sample_times must be sorted within [0, t_final]")
    if t_final == 0:
        return Evolution(times, [rho0 for _ in times])

    liou = gen.superoperator
    d = gen.dim
    y = rho0.matrix.ravel().copy()
    t_now = 0.0
    states = []
    # integrate to each sample exactly; dense-output interpolation breaks positivity
    for t in times:
        if t > t_now:
            sol = solve_ivp(
                lambda _t, v: liou @ v,
                (t_now, t),
                y,
                method="DOP853",
                rtol=tol,
                atol=tol * ABS_TOL_FACTOR,
            )
            if sol.status != 0:
                raise StepSizeUnderflowError(sol.message)
            y = sol.y[:, -1]
            t_now = t
        state = _guard(y.reshape(d, d), t)
        y = state.matrix.ravel().copy()
        states.append(state)
    return Evolution(times, states)


def steady_state_numeric(gen: LindbladGenerator, method: str = "sparse") -> FieldState:
    """Null vector of the vectorized generator, with the trace fixed to one.

    One row of the superoperator is replaced by the trace functional and the
    resulting linear system is solved by direct LU factorization (sparse
    SuperLU, or dense LAPACK with ``method="dense"``).  A second null vector
    makes the replaced system singular.
    """
    return stationary_state(gen.superoperator, gen.dim, gen.rate_down, method)


def stationary_state(liou, dim: int, rate_scale: float, method: str = "sparse") -> FieldState:
    """Trace-one null vector of any vectorized generator ``liou``."""
    d = dim
    liou = sp.csc_matrix(liou, dtype=complex)
    system = liou.tolil()
    row = np.zeros(d * d, dtype=complex)
    row[np.arange(d) * (d + 1)] = 1.0
    system[0, :] = row
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        if method == "dense":
            mat = system.toarray()
            vec = np.linalg.solve(mat, rhs)
            if np.linalg.cond(mat) > 1e14:
                raise DegenerateSteadyStateError("stationary subspace is not one-dimensional")
        elif method == "sparse":
            vec = splu(sp.csc_matrix(system)).solve(rhs)
        else:
            raise ValueError(f"unknown method {method!r}")
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise DegenerateSteadyStateError(
            "stationary subspace is not one-dimensional"
        ) from exc
    if not np.all(np.isfinite(vec)):
        raise DegenerateSteadyStateError("stationary subspace is not one-dimensional")
    residual = np.max(np.abs(liou @ vec))
    if residual > 1e-6 * rate_scale:
        raise DegenerateSteadyStateError(f"steady-state residual {residual:.2e}")
    return FieldState.from_unnormalized(vec.reshape(d, d))


def steady_state_analytic(params: CavityAtomParams, atom_rho) -> tuple[complex, float]:
    """(alpha, n_th) of the displaced thermal steady state.

    From d<a>/dt = -i lambda - (Gamma_r/2)<a>, alpha = -2i lambda / Gamma_r.
    """
    res = derive(params, atom_rho)
    return res.alpha, res.n_th


def g2_correlation(gen: LindbladGenerator, rho_ss: FieldState, tau_grid) -> np.ndarray:
    """Normalized intensity correlation by the quantum regression theorem.

    g2(tau) = tr{a^dag a e^{L tau}[a rho_ss a^dag]} / <a^dag a>^2
    """
    return regression_g2(gen.superoperator, rho_ss, tau_grid)


def regression_g2(liou, rho_ss: FieldState, tau_grid) -> np.ndarray:
    """Quantum-regression g2 for any vectorized generator ``liou``."""
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(taus < 0):
        raise ValueError("delays must be non-negative")
    n_mean = fock.mean_photon_number(rho_ss)
    if n_mean <= 0:
        raise UndefinedCorrelationError("g2 undefined for the vacuum")
    d = rho_ss.dim
    a = fock.annihilation_operator(d).matrix
    number_diag = np.arange(d) * (d + 1)
    liou = sp.csc_matrix(liou)

    order = np.argsort(taus)
    out = np.empty(taus.size)
    vec = (a @ rho_ss.matrix @ a.conj().T).ravel()
    t_prev = 0.0
    for k in order:
        step = taus[k] - t_prev
        if step > 0:
            vec = expm_multiply(liou * step, vec)
            t_prev = taus[k]
        out[k] = np.dot(np.arange(d), vec[number_diag].real)
    return out / n_mean**2
