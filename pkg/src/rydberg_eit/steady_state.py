"""
Stationary density matrices: a null-space solver and a time-evolution oracle.

The generator M (n^2 x n^2) has a one-dimensional null space for a physical
scheme. :func:`solve_steady_state` appends the trace condition as an extra row
and solves the overdetermined system in the least-squares sense, which does
not depend on choosing which of the redundant equations to drop.
:func:`evolve_to_steady` integrates the master equation from the ground
state with classical RK4; the two must agree once transients have died out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .liouvillian import DetuningAssignment, build_liouvillian
from .scheme import LevelScheme

TRACE_TOL = 1e-10
PSD_TOL = -1e-8
DEGENERACY_RTOL = 1e-10


class UnphysicalStateError(RuntimeError):
    """The solver produced a state with clearly negative populations."""


class IntegrationError(RuntimeError):
    """Time integration went unstable; retry with a smaller step."""


@dataclass(frozen=True)
class SteadyStateReport:
    rho: np.ndarray
    residual_norm: float
    generator_norm: float
    condition_flag: str             # "ok" | "near_degenerate"

    @property
    def rho21(self) -> complex:
        return complex(self.rho[1, 0])


def check_density_matrix(rho: np.ndarray, trace_tol: float = TRACE_TOL,
                         psd_tol: float = PSD_TOL) -> None:
    """Raise if ``rho`` is not Hermitian, unit-trace and PSD within tolerance."""
    if not np.array_equal(rho, rho.conj().T):
        raise UnphysicalStateError("density matrix is not exactly Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise UnphysicalStateError(f"trace {tr!r} deviates from 1 by more than {trace_tol}")
    lowest = np.linalg.eigvalsh(rho)[0]
    if lowest < psd_tol:
        raise UnphysicalStateError(
            f"density matrix has eigenvalue {lowest:.3e} < {psd_tol}; "
            "this points at a broken generator")


def _hermitize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    # exact Hermiticity after the division
    upper = np.triu(rho, 1)
    return np.diag(np.diag(rho).real).astype(complex) + upper + upper.conj().T


def steady_state_from_generator(m: np.ndarray, n: int) -> SteadyStateReport:
    """Trace-normalised least-squares null vector of a generator matrix."""
    sv = np.linalg.svd(m, compute_uv=False)
    norm = float(sv[0])
    scale = norm if norm > 0 else 1.0
    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[:: n + 1] = scale
    a = np.vstack([m, trace_row[None, :]])
    b = np.zeros(n * n + 1, dtype=complex)
    b[-1] = scale
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    rho = _hermitize(x.reshape(n, n))
    residual = float(np.linalg.norm(m @ rho.reshape(-1)))
    flag = "near_degenerate" if n > 1 and sv[-2] < DEGENERACY_RTOL * scale else "ok"
    return SteadyStateReport(rho, residual, norm, flag)


def solve_steady_state(scheme: LevelScheme, det: Optional[DetuningAssignment] = None,
                       check: bool = True) -> SteadyStateReport:
    """Stationary state of ``scheme`` at the given drive detunings.

    With ``check`` the result is validated by :func:`check_density_matrix`.
    A near-degenerate null space is reported through ``condition_flag``
    rather than raised.
    """
    gen = build_liouvillian(scheme, det)
    report = steady_state_from_generator(gen.matrix(), scheme.n)
    if check:
        check_density_matrix(report.rho)
    return report


def stable_step(m: np.ndarray) -> float:
    """Default RK4 step: 0.05 divided by the spectral norm of the generator."""
    norm = np.linalg.norm(m, 2)
    return 0.05 / norm if norm > 0 else math.inf


def _trace_project(a: np.ndarray, n: int) -> np.ndarray:
    """Remove round-off that makes ``a`` change the trace of vec(rho).

    Every power of the exact step satisfies e^T a = e^T with e = vec(identity);
    repeated squaring over ~1e8 steps otherwise lets rounding pile up.
    """
    diag = slice(None, None, n + 1)
    excess = a[diag].sum(axis=0)
    excess[diag] -= 1.0
    a[diag] -= excess / n
    return a


def _power_apply(step: np.ndarray, count: int, x: np.ndarray, n: int) -> np.ndarray:
    """``step**count @ x`` by binary powering, exactly ``count`` RK4 steps."""
    base = _trace_project(step.copy(), n)
    with np.errstate(over="ignore", invalid="ignore"):    # an unstable step is reported later
        while count:
            if count & 1:
                x = base @ x
            count >>= 1
            if count:
                base = _trace_project(base @ base, n)
    return x


def evolve_to_steady(scheme: LevelScheme, det: Optional[DetuningAssignment] = None,
                     t_final: float = 1e-6, dt: Optional[float] = None,
                     rho0: Optional[np.ndarray] = None) -> np.ndarray:
    """Integrate the master equation from the ground state up to ``t_final``.

    Classical fourth-order Runge-Kutta with a fixed step no larger than
    ``dt`` (default :func:`stable_step`). For a linear autonomous system one
    RK4 step is the fourth-order Taylor polynomial of exp(M h); the N steps
    are applied by binary powering of that step, so long horizons cost only
    about 2 log2(N) products.

    Raises
    ------
    IntegrationError
        If the trace drifts by more than 1e-9 or the state blows up.
    """
    n = scheme.n
    m = build_liouvillian(scheme, det).matrix()
    if rho0 is None:
        rho0 = np.zeros((n, n), dtype=complex)
        rho0[scheme.ground - 1, scheme.ground - 1] = 1.0
    x = np.asarray(rho0, dtype=complex).reshape(-1).copy()
    if t_final <= 0:
        return x.reshape(n, n)
    limit = stable_step(m)
    dt = limit if dt is None else dt
    steps = max(1, math.ceil(t_final / min(dt, t_final)))
    h = t_final / steps
    hm = h * m
    hm2 = hm @ hm
    step = np.eye(n * n) + hm + hm2 / 2 + hm2 @ hm / 6 + hm2 @ hm2 / 24
    x = _power_apply(step, steps, x, n)
    diag = slice(None, None, n + 1)
    drift = abs(x[diag].sum() - np.asarray(rho0).trace())
    if not np.all(np.isfinite(x)) or drift > 1e-9 or np.abs(x).max() > 1.0 + 1e-6:
        raise IntegrationError(
            f"RK4 unstable over {steps} steps (trace drift {drift:.2e}); "
            f"use dt <= {limit:.3e} s")
    rho = x.reshape(n, n)
    return 0.5 * (rho + rho.conj().T)


# -- real parametrisation of Hermitian matrices -----------------------------------

def hermitian_basis(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Maps between vec(rho) and a real vector r of length n^2.

    r[k*n+k] = rho_kk; for i > j, r[j*n+i] = Re rho_ij and r[i*n+j] = Im rho_ij.
    Returns ``(T, T_inv)`` with vec(rho) = T r.
    """
    size = n * n
    t = np.zeros((size, size), dtype=complex)
    t_inv = np.zeros((size, size), dtype=complex)
    for k in range(n):
        t[k * n + k, k * n + k] = 1.0
        t_inv[k * n + k, k * n + k] = 1.0
    for i in range(n):
        for j in range(i):
            lo, up = i * n + j, j * n + i          # rho_ij (i>j), rho_ji
            t[lo, up], t[lo, lo] = 1.0, 1j
            t[up, up], t[up, lo] = 1.0, -1j
            t_inv[up, lo], t_inv[up, up] = 0.5, 0.5
            t_inv[lo, lo], t_inv[lo, up] = -0.5j, 0.5j
    return t, t_inv


def real_generator(m: np.ndarray, n: int) -> np.ndarray:
    """The generator expressed in the real basis of :func:`hermitian_basis`."""
    t, t_inv = hermitian_basis(n)
    r = t_inv @ m @ t
    return np.ascontiguousarray(r.real)
