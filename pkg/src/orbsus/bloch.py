"""Bloch fibers H(k), their k-derivatives, eigen-decomposition and resolvents.

All routines accept either one k-point (shape ``(2,)``) or a batch (shape
``(n, 2)``); batched fibers carry a leading axis on every array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBand, EigSolverFailure, OnSpectrum
from .lattice import LatticeModel

# index of each second-derivative component in the ddH stack
DD_INDEX = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}


def lattice_matrices(model: LatticeModel, k: np.ndarray):
    """Bloch matrix and its first and second k-derivatives for a hopping table.

    ``H(x, y; k) = sum_v exp(-i k.(x + v - y)) H0(x + v, y)``; each derivative
    brings down a factor ``-i d_alpha`` with ``d = x + v - y``.

    Returns ``H`` with shape ``(n, M, M)``, ``dH`` with shape ``(n, 2, M, M)``
    and ``ddH`` with shape ``(n, 3, M, M)`` ordered ``(11, 12, 22)``.
    """
    k = np.atleast_2d(np.asarray(k, dtype=float))
    i, j, d, t = model.hopping_arrays()
    n, M = len(k), model.M
    amp = t[None, :] * np.exp(-1j * (k @ d.T))  # (n, nhop)
    H = np.zeros((n, M, M), complex)
    dH = np.zeros((n, 2, M, M), complex)
    ddH = np.zeros((n, 3, M, M), complex)
    np.add.at(H, (slice(None), i, j), amp)
    for a in range(2):
        np.add.at(dH, (slice(None), a, i, j), -1j * d[:, a] * amp)
    for c, (a, g) in enumerate(((0, 0), (0, 1), (1, 1))):
        np.add.at(ddH, (slice(None), c, i, j), -d[:, a] * d[:, g] * amp)
    return H, dH, ddH


def model_matrices(model, k):
    if isinstance(model, LatticeModel):
        return lattice_matrices(model, k)
    return model.matrices(np.atleast_2d(np.asarray(k, dtype=float)))


def fix_phases(U: np.ndarray) -> np.ndarray:
    """Rotate each eigenvector so that its largest-magnitude component is real positive."""
    idx = np.argmax(np.abs(U), axis=-2)  # (..., M)
    pivot = np.take_along_axis(U, idx[..., None, :], axis=-2)
    phase = pivot / np.abs(pivot)
    return U / phase


@dataclass(frozen=True)
class BlochFiber:
    """Fiber data at one k-point or at a batch of k-points."""

    k: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    ddH: np.ndarray
    E: np.ndarray
    U: np.ndarray

    @property
    def M(self) -> int:
        return self.H.shape[-1]

    @property
    def batched(self) -> bool:
        return self.H.ndim == 3

    def __len__(self) -> int:
        return self.H.shape[0] if self.batched else 1

    def __getitem__(self, idx) -> "BlochFiber":
        if not self.batched:
            raise TypeError("single fiber is not indexable")
        return BlochFiber(self.k[idx], self.H[idx], self.dH[idx], self.ddH[idx], self.E[idx], self.U[idx])

    def deg_tol(self) -> np.ndarray:
        """Degeneracy threshold ``1e-8 (E_M - E_1 + 1)``, per k-point."""
        return 1e-8 * (self.E[..., -1] - self.E[..., 0] + 1.0)

    def min_gap(self) -> np.ndarray:
        if self.M == 1:
            return np.full(self.E.shape[:-1], np.inf)
        return np.min(np.diff(self.E, axis=-1), axis=-1)

    def degenerate(self) -> np.ndarray:
        """Boolean mask (or scalar) of k-points with a pair of bands closer than the threshold."""
        return self.min_gap() <= self.deg_tol()

    def pi(self) -> np.ndarray:
        """``U^dag dH_alpha U`` with shape ``(..., 2, M, M)``."""
        Uh = np.conj(np.swapaxes(self.U, -1, -2))[..., None, :, :]
        return Uh @ self.dH @ self.U[..., None, :, :]

    def sigma(self) -> np.ndarray:
        """``U^dag ddH_{alpha gamma} U`` with shape ``(..., 3, M, M)``."""
        Uh = np.conj(np.swapaxes(self.U, -1, -2))[..., None, :, :]
        return Uh @ self.ddH @ self.U[..., None, :, :]


def diagonalize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        E, U = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigSolverFailure(f"Hermitian eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(E)):
        raise EigSolverFailure("eigensolver returned non-finite eigenvalues")
    return E, fix_phases(U)


def fiber_from_matrices(k, H, dH, ddH) -> BlochFiber:
    E, U = diagonalize(H)
    return BlochFiber(np.asarray(k, float), H, dH, ddH, E, U)


def fiber(model, k) -> BlochFiber:
    """Build and diagonalize the Bloch fiber of ``model`` at ``k``.

    Parameters
    ----------
    model : LatticeModel or AnalyticFiber
    k : array_like, shape (2,) or (n, 2)

    Returns
    -------
    BlochFiber
        Unbatched for a single k-point, batched otherwise.  Eigenvalues are
        sorted increasingly.
    """
    k = np.asarray(k, dtype=float)
    single = k.ndim == 1
    H, dH, ddH = model_matrices(model, k)
    f = fiber_from_matrices(np.atleast_2d(k), H, dH, ddH)
    return f[0] if single else f


def resolvent(f: BlochFiber, xi: complex) -> np.ndarray:
    """``(H(k) - xi)^{-1}`` assembled from the eigen-decomposition."""
    E = f.E
    scale = 1e-13 * (np.max(E) - np.min(E) + 1.0)
    dist = np.min(np.abs(E - xi))
    if dist <= scale:
        raise OnSpectrum(f"xi={xi} lies within {dist:.3g} of the spectrum")
    r = 1.0 / (E - xi)
    return (f.U * r[..., None, :]) @ np.conj(np.swapaxes(f.U, -1, -2))


def band_derivatives(f: BlochFiber, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of the band energy ``E_j`` from first-order perturbation theory.

    ``dE_j/dk_a = pi_jj(a)`` and
    ``d2E_j/dk_a dk_g = sigma_jj(ag) + 2 sum_{m != j} Re[pi_mj(a) pi_jm(g)] / (E_j - E_m)``.

    Works on single or batched fibers (then returns arrays with a leading axis).
    Raises :class:`DegenerateBand` when band ``j`` touches a neighbour.
    """
    E = f.E
    M = f.M
    tol = f.deg_tol()
    others = [m for m in range(M) if m != j]
    if others:
        gaps = np.min(np.abs(E[..., others] - E[..., j : j + 1]), axis=-1)
        if np.any(gaps <= tol):
            raise DegenerateBand(f"band {j} is degenerate at some k-point")
    pi = f.pi()
    sg = f.sigma()
    grad = np.real(pi[..., :, j, j])
    hess = np.empty(E.shape[:-1] + (2, 2))
    for a in range(2):
        for g in range(a, 2):
            val = np.real(sg[..., DD_INDEX[a, g], j, j])
            for m in others:
                val = val + 2 * np.real(pi[..., a, m, j] * pi[..., g, j, m]) / (E[..., j] - E[..., m])
            hess[..., a, g] = val
            hess[..., g, a] = val
    return grad, hess
