"""
Rotating-frame Hamiltonian and Lindblad-type dissipator for a level scheme.

Conventions
-----------
Matrices are returned divided by hbar, so every entry is in rad/s:

    H/hbar = 1/2 * [[diag: cumulative detunings], [off-diag: Omega * scale]]

and the generator reads ``drho/dt = -i [H/hbar, rho] + L(rho)``. Vectorisation
is row-major (numpy C order): ``vec(rho)[i*n + j] = rho[i, j]``. Level ids are
1-based in the scheme and 0-based in arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .scheme import (LevelScheme, SchemeError, coupling_detunings, coupling_rabis,
                     excitation_paths, parents)

DetuningAssignment = Mapping[str, float]
"""Drive id -> detuning in rad/s; drives not listed keep the scheme's value."""


def cumulative_detunings(scheme: LevelScheme,
                         det: Optional[DetuningAssignment] = None) -> np.ndarray:
    """Diagonal of the bracketed Hamiltonian matrix (rad/s), one entry per level.

    Each level gets ``-2 * sum(sign * detuning)`` over the couplings on its
    excitation path from the ground state, where ``sign`` is -1 for a step
    that goes down in energy. The ground state is 0.
    """
    per_coupling = coupling_detunings(scheme, det)
    paths = excitation_paths(scheme)
    out = np.zeros(scheme.n)
    for level, path in paths.items():
        out[level - 1] = -2.0 * sum(sign * per_coupling[pair] for pair, sign in path)
    return out


def detuning_gradient(scheme: LevelScheme, drive_id: str) -> np.ndarray:
    """d(cumulative_detunings)/d(detuning of ``drive_id``), per level."""
    targets = set(scheme.drive(drive_id).pairs)
    grad = np.zeros(scheme.n)
    for level, path in excitation_paths(scheme).items():
        grad[level - 1] = -2.0 * sum(sign for pair, sign in path if pair in targets)
    return grad


def build_hamiltonian(scheme: LevelScheme,
                      det: Optional[DetuningAssignment] = None) -> np.ndarray:
    """H/hbar in rad/s (complex, Hermitian by construction)."""
    n = scheme.n
    h = np.zeros((n, n), dtype=complex)
    h[np.diag_indices(n)] = 0.5 * cumulative_detunings(scheme, det)
    for (a, b), rabi in coupling_rabis(scheme).items():
        h[a - 1, b - 1] = h[b - 1, a - 1] = 0.5 * rabi
    return h


@dataclass(frozen=True)
class DissipatorSpec:
    """Decay bookkeeping for a scheme.

    ``decay[i]`` is Gamma of level i+1, ``parent[i]`` the 0-based index the
    level decays into (-1 for the ground state) and ``gamma`` the symmetric
    coherence damping matrix with ``gamma[i, j] = (G_i + G_j)/2`` plus any
    extra dephasing.
    """

    decay: np.ndarray
    parent: np.ndarray
    gamma: np.ndarray

    @property
    def n(self) -> int:
        return len(self.decay)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = -self.gamma * rho
        pops = np.real(np.diag(rho))
        flow = np.zeros(self.n)
        flow -= self.decay * pops
        for k in range(self.n):
            if self.parent[k] >= 0:
                flow[self.parent[k]] += self.decay[k] * pops[k]
        out[np.diag_indices(self.n)] = flow
        return out

    def matrix(self) -> np.ndarray:
        """Superoperator (n^2 x n^2) acting on row-major vec(rho)."""
        n = self.n
        m = np.diag(-self.gamma.reshape(-1).astype(complex))
        for k in range(n):
            kk = k * n + k
            m[kk, kk] = -self.decay[k]
            if self.parent[k] >= 0:
                p = self.parent[k]
                m[p * n + p, kk] += self.decay[k]
        return m


def build_dissipator(scheme: LevelScheme) -> DissipatorSpec:
    """Population flows to each level's excitation-path predecessor."""
    decay = np.array([lv.decay_rate for lv in scheme.levels])
    extra = np.array([lv.dephasing for lv in scheme.levels])
    gamma = 0.5 * (decay[:, None] + decay[None, :]) + 0.5 * (extra[:, None] + extra[None, :])
    np.fill_diagonal(gamma, 0.0)
    parent = np.full(scheme.n, -1, dtype=int)
    for level, p in parents(scheme).items():
        if p is not None:
            parent[level - 1] = p - 1
    return DissipatorSpec(decay=decay, parent=parent, gamma=gamma)


def apply_generator(h: np.ndarray, dissipator: DissipatorSpec, rho: np.ndarray) -> np.ndarray:
    """drho/dt for the density matrix ``rho``."""
    h = np.asarray(h)
    rho = np.asarray(rho)
    n = dissipator.n
    if h.shape != (n, n) or rho.shape != (n, n):
        raise SchemeError(f"dimension mismatch: H {h.shape}, rho {rho.shape}, "
                          f"dissipator for {n} levels")
    return -1j * (h @ rho - rho @ h) + dissipator.apply(rho)


def generator_matrix(h: np.ndarray, dissipator: DissipatorSpec) -> np.ndarray:
    """Matrix M with vec(drho/dt) = M vec(rho) (row-major vectorisation)."""
    n = dissipator.n
    eye = np.eye(n)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T)) + dissipator.matrix()


@dataclass(frozen=True)
class Liouvillian:
    hamiltonian: np.ndarray
    dissipator: DissipatorSpec

    @property
    def n(self) -> int:
        return self.dissipator.n

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply_generator(self.hamiltonian, self.dissipator, rho)

    def matrix(self) -> np.ndarray:
        return generator_matrix(self.hamiltonian, self.dissipator)


def build_liouvillian(scheme: LevelScheme,
                      det: Optional[DetuningAssignment] = None) -> Liouvillian:
    return Liouvillian(build_hamiltonian(scheme, det), build_dissipator(scheme))
