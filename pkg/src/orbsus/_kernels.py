"""Compiled inner loops for the contour quadrature.

The trace ``Tr(P3 + P4 + P5)`` is evaluated in the eigenbasis of ``H(k)``
where the resolvent is ``diag(D)``, ``D_j = 1/(E_j - xi)``.  Products are the
literal matrix chains of the trace formula; only the diagonal of the final
product is formed since just the trace is needed.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
from numba import njit, prange, set_num_threads, config  # noqa: E402

from ._parallel import worker_count  # noqa: E402


def apply_thread_cap() -> None:
    set_num_threads(max(1, min(worker_count(), config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def _trace_one(p1, p2, s11, s12, s22, D, M, P12, P21, K11, K22):
    # two-factor chains  X R Y
    for a in range(M):
        for c in range(M):
            x12 = 0j
            x21 = 0j
            x11 = 0j
            x22 = 0j
            for b in range(M):
                db = D[b]
                x12 += p1[a, b] * db * p2[b, c]
                x21 += p2[a, b] * db * p1[b, c]
                x11 += p1[a, b] * db * p1[b, c]
                x22 += p2[a, b] * db * p2[b, c]
            P12[a, c] = x12
            P21[a, c] = x21
            K11[a, c] = x11
            K22[a, c] = x22
    tr = 0j
    for a in range(M):
        acc = 0j
        for b in range(M):
            db = D[b]
            # P5 = R A R (-A) R, A = P12 - P21
            acc -= (P12[a, b] - P21[a, b]) * db * (P12[b, a] - P21[b, a])
            # P4 = R {s11 R p2 R p2 - s12 R (p1 R p2 + p2 R p1) + s22 R p1 R p1} R
            acc += s11[a, b] * db * K22[b, a]
            acc -= s12[a, b] * db * (P12[b, a] + P21[b, a])
            acc += s22[a, b] * db * K11[b, a]
            # P3 = -R {1/2 s11 R s22 + 1/2 s22 R s11 - s12 R s12} R
            acc -= 0.5 * s11[a, b] * db * s22[b, a] + 0.5 * s22[a, b] * db * s11[b, a] - s12[a, b] * db * s12[b, a]
        tr += D[a] * D[a] * acc
    return tr


@njit(parallel=True, cache=True)
def contour_sum(pi, sg, E, xi, wf):
    """``out[k] = sum_n wf[n] Tr(P3 + P4 + P5)(k; xi[n])`` and ``mag[k] = sum_n |wf[n] Tr|``.

    ``mag`` bounds the size of the summands and so sets the round-off floor.
    """
    nk = E.shape[0]
    M = E.shape[1]
    out = np.zeros(nk, dtype=np.complex128)
    mag = np.zeros(nk)
    for k in prange(nk):
        D = np.empty(M, dtype=np.complex128)
        P12 = np.empty((M, M), dtype=np.complex128)
        P21 = np.empty((M, M), dtype=np.complex128)
        K11 = np.empty((M, M), dtype=np.complex128)
        K22 = np.empty((M, M), dtype=np.complex128)
        acc = 0j
        am = 0.0
        for n in range(xi.shape[0]):
            for j in range(M):
                D[j] = 1.0 / (E[k, j] - xi[n])
            term = wf[n] * _trace_one(pi[k, 0], pi[k, 1], sg[k, 0], sg[k, 1], sg[k, 2], D, M, P12, P21, K11, K22)
            acc += term
            am += abs(term)
        out[k] = acc
        mag[k] = am
    return out, mag


@njit(parallel=True, cache=True)
def trace_table(pi, sg, E, xi):
    """``out[k, n] = Tr(P3 + P4 + P5)(k; xi[n])``."""
    nk = E.shape[0]
    M = E.shape[1]
    out = np.zeros((nk, xi.shape[0]), dtype=np.complex128)
    for k in prange(nk):
        D = np.empty(M, dtype=np.complex128)
        P12 = np.empty((M, M), dtype=np.complex128)
        P21 = np.empty((M, M), dtype=np.complex128)
        K11 = np.empty((M, M), dtype=np.complex128)
        K22 = np.empty((M, M), dtype=np.complex128)
        for n in range(xi.shape[0]):
            for j in range(M):
                D[j] = 1.0 / (E[k, j] - xi[n])
            out[k, n] = _trace_one(pi[k, 0], pi[k, 1], sg[k, 0], sg[k, 1], sg[k, 2], D, M, P12, P21, K11, K22)
    return out
