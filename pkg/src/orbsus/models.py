"""Built-in models: gapped and diagonal Dirac fibers, the honeycomb lattice,
and the change-of-basis relation between the two Dirac fibers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NonPositiveGap, SingularBasis
from .lattice import LatticeModel, Zone, build_model

_SX = np.array([[0, 1], [1, 0]], complex)
_SY2 = np.array([[0, 1j], [-1j, 0]], complex)  # d/dk2 of [[0, k1+ik2], [k1-ik2, 0]]
_SZ = np.diag([1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class AnalyticFiber:
    """Model given directly by closed-form Bloch matrices on a truncated zone.

    ``builder(k)`` receives an ``(n, 2)`` array and returns ``H`` ``(n, M, M)``,
    ``dH`` ``(n, 2, M, M)`` and ``ddH`` ``(n, 3, M, M)`` ordered ``(11, 12, 22)``.
    """

    name: str
    M: int
    builder: Callable = field(repr=False, compare=False)
    zone: Zone = Zone()
    params: tuple = ()

    def matrices(self, k: np.ndarray):
        return self.builder(np.atleast_2d(np.asarray(k, dtype=float)))

    def fingerprint(self) -> str:
        text = f"{self.name}|{self.M}|{self.params!r}|{self.zone!r}"
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not (delta > 0 and math.isfinite(delta)):
        raise NonPositiveGap(f"gap parameter must be positive, got {delta}")
    return delta


def dirac_gapped(delta: float, zone: Zone | None = None) -> AnalyticFiber:
    """Massive Dirac fiber ``[[delta, k1 + i k2], [k1 - i k2, -delta]]``.

    Bands ``-/+ sqrt(delta^2 + |k|^2)``; the first derivatives are constant and
    the second derivatives vanish.
    """
    delta = _check_delta(delta)

    def build(k):
        n = len(k)
        kc = k[:, 0] + 1j * k[:, 1]
        H = np.empty((n, 2, 2), complex)
        H[:, 0, 0] = delta
        H[:, 1, 1] = -delta
        H[:, 0, 1] = kc
        H[:, 1, 0] = np.conj(kc)
        dH = np.broadcast_to(np.stack([_SX, _SY2]), (n, 2, 2, 2)).copy()
        ddH = np.zeros((n, 3, 2, 2), complex)
        return H, dH, ddH

    return AnalyticFiber("dirac-l", 2, build, zone or Zone(), (("delta", delta),))


def dirac_diagonal(delta: float, zone: Zone | None = None) -> AnalyticFiber:
    """Diagonal fiber ``diag(-e(k), e(k))`` with ``e = sqrt(delta^2 + |k|^2)``."""
    delta = _check_delta(delta)
    s = np.array([-1.0, 1.0])

    def build(k):
        n = len(k)
        e = np.sqrt(delta**2 + k[:, 0] ** 2 + k[:, 1] ** 2)
        H = np.zeros((n, 2, 2), complex)
        dH = np.zeros((n, 2, 2, 2), complex)
        ddH = np.zeros((n, 3, 2, 2), complex)
        idx = np.arange(2)
        H[:, idx, idx] = e[:, None] * s
        for a in range(2):
            dH[:, a, idx, idx] = (k[:, a] / e)[:, None] * s
        for c, (a, g) in enumerate(((0, 0), (0, 1), (1, 1))):
            val = (a == g) / e - k[:, a] * k[:, g] / e**3
            ddH[:, c, idx, idx] = val[:, None] * s
        return H, dH, ddH

    return AnalyticFiber("dirac-d", 2, build, zone or Zone(), (("delta", delta),))


def flat_bands(levels, zone: Zone | None = None) -> AnalyticFiber:
    """k-independent diagonal fiber; every derivative vanishes."""
    levels = np.asarray(levels, dtype=float).reshape(-1)
    M = len(levels)

    def build(k):
        n = len(k)
        H = np.broadcast_to(np.diag(levels).astype(complex), (n, M, M)).copy()
        return H, np.zeros((n, 2, M, M), complex), np.zeros((n, 3, M, M), complex)

    return AnalyticFiber("flat", M, build, zone or Zone(), (("levels", tuple(levels)),))


def honeycomb(t: float = 1.0, onsite_gap: float = 0.0, a: float = 1.0) -> LatticeModel:
    """Nearest-neighbour honeycomb lattice with optional staggered on-site energy.

    Site 0 sits at the origin with energy ``+onsite_gap/2``, site 1 at ``(a, 0)``
    with ``-onsite_gap/2``.  Each site-1 atom is bonded to the three site-0
    atoms at ``x_1``, ``x_1 - a1`` and ``x_1 - a2``.
    """
    if t == 0:
        raise ConfigError("hopping amplitude t must be nonzero")
    if a <= 0:
        raise ConfigError("lattice constant must be positive")
    r3 = math.sqrt(3.0)
    hops = [{"i": 1, "j": 0, "cell": c, "t": [float(t), 0.0]} for c in ([0, 0], [-1, 0], [0, -1])]
    if onsite_gap:
        hops += [
            {"i": 0, "j": 0, "cell": [0, 0], "t": [onsite_gap / 2, 0.0]},
            {"i": 1, "j": 1, "cell": [0, 0], "t": [-onsite_gap / 2, 0.0]},
        ]
    raw = {
        "name": "honeycomb",
        "lattice": {"a1": [1.5 * a, r3 / 2 * a], "a2": [1.5 * a, -r3 / 2 * a], "cutoff": 1.01 * a},
        "site": [{"position": [0.0, 0.0]}, {"position": [a, 0.0]}],
        "hop": hops,
    }
    return build_model(raw)


REGISTRY = {
    "dirac-l": dirac_gapped,
    "dirac-d": dirac_diagonal,
    "honeycomb": honeycomb,
}


def get_model(name: str, **params):
    """Look up a built-in model by registry name.

    ``dirac-l`` and ``dirac-d`` take ``delta`` and ``zone``; ``honeycomb``
    takes ``t``, ``onsite_gap`` and ``a``.
    """
    try:
        ctor = REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
    if name.startswith("dirac"):
        return ctor(params.get("delta", 1.0), params.get("zone"))
    return ctor(params.get("t", 1.0), params.get("onsite_gap", 0.0), params.get("a", 1.0))


# --------------------------------------------------------------------------
# change of basis between the two Dirac fibers


def basis_change(delta: float, k) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``P(k)`` and its closed-form inverse with ``H_l = P H_d P^{-1}``."""
    k1, k2 = float(k[0]), float(k[1])
    e = math.sqrt(delta**2 + k1**2 + k2**2)
    if abs(delta - e) <= 1e-14 * (1 + e):
        raise SingularBasis(f"change of basis is singular at k={k}, delta={delta}")
    kc = k1 + 1j * k2
    P = np.array([[-kc / (delta + e), -kc / (delta - e)], [1, 1]], complex)
    Pinv = np.array(
        [[-np.conj(kc) / (2 * e), (delta + e) / (2 * e)], [np.conj(kc) / (2 * e), (e - delta) / (2 * e)]],
        complex,
    )
    return P, Pinv


def p5_gapped_trace(delta: float, k, xi: complex) -> complex:
    """Closed-form ``Tr P5`` for the gapped Dirac fiber.

    ``Tr P5 = 8 xi (delta^2 - xi^2) / [(E1 - xi)^4 (E2 - xi)^4]``.
    """
    e = math.sqrt(delta**2 + k[0] ** 2 + k[1] ** 2)
    return 8 * xi * (delta**2 - xi**2) / ((-e - xi) ** 4 * (e - xi) ** 4)


def p5_matrix(H, dH, xi):
    """``R {d1 R d2 - d2 R d1} R {d2 R d1 - d1 R d2} R`` for one fiber."""
    R = np.linalg.inv(H - xi * np.eye(len(H)))
    A = dH[0] @ R @ dH[1] - dH[1] @ R @ dH[0]
    return R @ A @ R @ (-A) @ R


@dataclass(frozen=True)
class ChangeOfBasisReport:
    delta: float
    k: tuple[float, float]
    xi: complex
    conjugation_residual: float
    trace_p5_diag_conjugated: complex
    trace_w5: complex
    trace_w5_expected: complex

    @property
    def w5_rel_err(self) -> float:
        return abs(self.trace_w5 - self.trace_w5_expected) / abs(self.trace_w5_expected)


def change_of_basis_demo(delta: float, k, xi: complex = 1j) -> ChangeOfBasisReport:
    """Compare the gapped and diagonal Dirac fibers through ``P(k)``.

    Checks ``P H_d P^{-1} = H_l``, evaluates ``P P5_d P^{-1}`` (which vanishes)
    and ``W5 = P5_l - P P5_d P^{-1}``, whose trace must reproduce the full
    gapped ``Tr P5``.
    """
    delta = float(delta)
    if delta < 0:
        raise NonPositiveGap(f"delta must be non-negative, got {delta}")
    k = np.asarray(k, dtype=float)
    P, Pinv = basis_change(delta, k)
    Hl, dHl, _ = dirac_gapped(max(delta, 1e-300)).matrices(k)
    Hd, dHd, _ = dirac_diagonal(max(delta, 1e-300)).matrices(k)
    resid = float(np.max(np.abs(P @ Hd[0] @ Pinv - Hl[0])))
    p5d = P @ p5_matrix(Hd[0], dHd[0], xi) @ Pinv
    w5 = p5_matrix(Hl[0], dHl[0], xi) - p5d
    return ChangeOfBasisReport(
        delta,
        (float(k[0]), float(k[1])),
        complex(xi),
        resid,
        complex(np.trace(p5d)),
        complex(np.trace(w5)),
        complex(p5_gapped_trace(delta, k, xi)),
    )
