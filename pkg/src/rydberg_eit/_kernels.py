"""
Compiled inner loop of the spectrum scans.

A scan solves many small real systems that differ only in the probe and
coupling detunings. In the real Hermitian basis the generator is affine in
both, R = R0 + dp*Kp + dc*Kc, so each system is assembled in place and
solved by Gaussian elimination with partial pivoting. The batch index is the
innermost array axis so the elimination loops vectorise across systems.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def solve_affine_batch(r0, kp, kc, dp, dc, trace_row, scale, out, pivot_ratio):
    """Solve ``(R0 + dp[m] Kp + dc[m] Kc) x = 0`` with a trace constraint.

    Row ``trace_row`` of every system is replaced by ``scale * trace(x) = scale``.
    Results go to ``out[:, m]``; ``pivot_ratio[m]`` receives the smallest
    pivot magnitude divided by ``scale``, a cheap singularity indicator.
    """
    n2 = r0.shape[0]
    nb = dp.shape[0]
    side = int(round(np.sqrt(n2)))
    a = np.empty((n2, n2, nb))
    b = np.zeros((n2, nb))
    for i in range(n2):
        for j in range(n2):
            base, gp, gc = r0[i, j], kp[i, j], kc[i, j]
            for m in range(nb):
                a[i, j, m] = base + dp[m] * gp + dc[m] * gc
    for j in range(n2):
        for m in range(nb):
            a[trace_row, j, m] = 0.0
    for k in range(side):
        for m in range(nb):
            a[trace_row, k * side + k, m] = scale
    for m in range(nb):
        b[trace_row, m] = scale
        pivot_ratio[m] = np.inf

    inv = np.empty(nb)
    for k in range(n2):
        for m in range(nb):
            p = k
            best = abs(a[k, k, m])
            for i in range(k + 1, n2):
                v = abs(a[i, k, m])
                if v > best:
                    best = v
                    p = i
            if p != k:
                for j in range(k, n2):
                    t = a[k, j, m]
                    a[k, j, m] = a[p, j, m]
                    a[p, j, m] = t
                t = b[k, m]
                b[k, m] = b[p, m]
                b[p, m] = t
            ratio = best / scale
            if ratio < pivot_ratio[m]:
                pivot_ratio[m] = ratio
            inv[m] = 1.0 / a[k, k, m] if best > 0.0 else 0.0
        for i in range(k + 1, n2):
            for m in range(nb):
                a[i, k, m] *= inv[m]
            for j in range(k + 1, n2):
                for m in range(nb):
                    a[i, j, m] -= a[i, k, m] * a[k, j, m]
            for m in range(nb):
                b[i, m] -= a[i, k, m] * b[k, m]
    for k in range(n2 - 1, -1, -1):
        for m in range(nb):
            piv = a[k, k, m]
            b[k, m] = b[k, m] / piv if piv != 0.0 else np.nan
        for i in range(k):
            for m in range(nb):
                b[i, m] -= a[i, k, m] * b[k, m]
    for i in range(n2):
        for m in range(nb):
            out[i, m] = b[i, m]
