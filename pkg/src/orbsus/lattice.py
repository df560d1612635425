"""Crystal description: Bravais lattice, basis sites and the hopping table.

Also builds k-space quadrature grids, both the periodic trapezoid rule on the
Brillouin zone of a lattice model and Gauss-Legendre rules on the truncated
square and disk zones used by continuum toy models.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import (
    ConfigError,
    DegenerateLattice,
    NonHermitianConflict,
    RangeViolation,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

# relative tolerance used to decide whether two amplitudes are conjugate
_CONJ_TOL = 1e-12


@dataclass(frozen=True)
class Hopping:
    """Directed hopping entry ``H0(x_i + n1*a1 + n2*a2, x_j) = t``."""

    i: int
    j: int
    cell: tuple[int, int]
    t: complex

    def reversed(self) -> "Hopping":
        return Hopping(self.j, self.i, (-self.cell[0], -self.cell[1]), self.t.conjugate())


@dataclass(frozen=True)
class LatticeModel:
    """Immutable tight-binding model on a two-dimensional Bravais lattice.

    Use :func:`build_model` to construct one; it applies the Hermitian
    closure of the hopping table and checks the lattice invariants.
    """

    a1: tuple[float, float]
    a2: tuple[float, float]
    basis: tuple[tuple[float, float], ...]
    hoppings: tuple[Hopping, ...]
    cutoff: float
    name: str = "lattice"

    @property
    def M(self) -> int:
        return len(self.basis)

    @property
    def cell_area(self) -> float:
        return abs(self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0])

    def displacement(self, h: Hopping) -> np.ndarray:
        """Vector ``x_i + n1*a1 + n2*a2 - x_j`` of a hopping entry."""
        xi = np.asarray(self.basis[h.i])
        xj = np.asarray(self.basis[h.j])
        return xi + h.cell[0] * np.asarray(self.a1) + h.cell[1] * np.asarray(self.a2) - xj

    def hopping_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized view ``(i, j, d, t)`` with ``d`` the displacement vectors."""
        return _hopping_arrays(self)

    def to_raw(self) -> dict[str, Any]:
        """Inverse of :func:`build_model` (returns the closed table)."""
        return {
            "name": self.name,
            "lattice": {"a1": list(self.a1), "a2": list(self.a2), "cutoff": self.cutoff},
            "site": [{"position": list(p)} for p in self.basis],
            "hop": [
                {"i": h.i, "j": h.j, "cell": list(h.cell), "t": [h.t.real, h.t.imag]}
                for h in self.hoppings
            ],
        }

    def fingerprint(self) -> str:
        """Short stable hash of the model content, used in CSV provenance lines."""
        parts = [repr(self.a1), repr(self.a2), repr(self.basis), repr(self.cutoff)]
        # "+ 0.0" folds -0.0 (left by conjugation) into 0.0
        parts += [f"{h.i},{h.j},{h.cell},{h.t.real + 0.0!r},{h.t.imag + 0.0!r}" for h in self.hoppings]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:12]


@lru_cache(maxsize=64)
def _hopping_arrays(model: LatticeModel):
    hops = model.hoppings
    i = np.array([h.i for h in hops], dtype=int)
    j = np.array([h.j for h in hops], dtype=int)
    d = np.array([model.displacement(h) for h in hops], dtype=float).reshape(-1, 2)
    t = np.array([h.t for h in hops], dtype=complex)
    return i, j, d, t


def _vec2(value: Any, what: str) -> tuple[float, float]:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a 2-vector of reals, got {value!r}") from exc
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what}: expected a finite 2-vector, got {value!r}")
    return (float(arr[0]), float(arr[1]))


def _amplitude(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"hopping amplitude must be [re, im], got {value!r}")
        t = complex(float(value[0]), float(value[1]))
    else:
        t = complex(value)
    if not (math.isfinite(t.real) and math.isfinite(t.imag)):
        raise ConfigError(f"non-finite hopping amplitude {value!r}")
    return t


def check_lattice(a1: Iterable[float], a2: Iterable[float]) -> None:
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    cross = a1[0] * a2[1] - a1[1] * a2[0]
    if abs(cross) <= 1e-12 * np.linalg.norm(a1) * np.linalg.norm(a2) or cross == 0.0:
        raise DegenerateLattice(f"a1={a1.tolist()} and a2={a2.tolist()} are parallel")


def build_model(raw: Mapping[str, Any]) -> LatticeModel:
    """Build a :class:`LatticeModel` from a parsed description.

    Parameters
    ----------
    raw : mapping
        Same layout as the TOML model file: ``lattice`` (``a1``, ``a2`` and an
        optional ``cutoff``), a list ``site`` of ``{"position": [x, y]}`` and a
        list ``hop`` of ``{"i", "j", "cell", "t"}`` records.  ``t`` is either a
        number or ``[re, im]``.

    Returns
    -------
    LatticeModel
        Hermitian-closed model.  Missing reverse entries ``(j, i, -cell,
        conj(t))`` are inserted.  Entries are stored in a canonical order so
        that closure is idempotent.

    Raises
    ------
    DegenerateLattice
        ``a1`` parallel to ``a2``.
    NonHermitianConflict
        An entry and its reverse disagree, or a bond is listed twice with
        different amplitudes.
    RangeViolation
        A hopping longer than ``cutoff``.
    """
    try:
        lat = raw["lattice"]
        a1 = _vec2(lat["a1"], "lattice.a1")
        a2 = _vec2(lat["a2"], "lattice.a2")
        sites = raw["site"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"model description is missing {exc}") from exc
    check_lattice(a1, a2)
    if not sites:
        raise ConfigError("basis is empty")
    basis = tuple(_vec2(s["position"], f"site[{n}].position") for n, s in enumerate(sites))
    M = len(basis)
    if M < 2:
        raise ConfigError("at least two basis sites are required")

    table: dict[tuple[int, int, tuple[int, int]], complex] = {}

    def insert(h: Hopping) -> None:
        key = (h.i, h.j, h.cell)
        old = table.get(key)
        if old is not None and abs(old - h.t) > _CONJ_TOL * max(1.0, abs(old)):
            raise NonHermitianConflict(
                f"bond {key} has conflicting amplitudes {old} and {h.t}"
            )
        table[key] = h.t

    for n, rec in enumerate(raw.get("hop", [])):
        try:
            i, j = int(rec["i"]), int(rec["j"])
            cell = rec.get("cell", (0, 0))
            cell = (int(cell[0]), int(cell[1]))
            t = _amplitude(rec["t"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"hop[{n}] malformed: {rec!r}") from exc
        if not (0 <= i < M and 0 <= j < M):
            raise ConfigError(f"hop[{n}] references a site outside 0..{M - 1}")
        insert(Hopping(i, j, cell, t))

    for (i, j, cell), t in list(table.items()):
        insert(Hopping(i, j, cell, t).reversed())

    hops = tuple(Hopping(i, j, cell, t) for (i, j, cell), t in sorted(table.items()))

    a1v, a2v = np.asarray(a1), np.asarray(a2)
    lengths = [
        float(np.linalg.norm(np.asarray(basis[h.i]) + h.cell[0] * a1v + h.cell[1] * a2v - np.asarray(basis[h.j])))
        for h in hops
    ]
    cutoff = lat.get("cutoff")
    if cutoff is None:
        cutoff = (max(lengths) if lengths else 0.0) * (1 + 1e-9) + 1e-12
    cutoff = float(cutoff)
    for h, length in zip(hops, lengths):
        if length >= cutoff:
            raise RangeViolation(f"hop {h} has range {length:g} >= cutoff {cutoff:g}")

    return LatticeModel(a1, a2, basis, hops, cutoff, str(raw.get("name", "lattice")))


def load_model_file(path: str | Path) -> tuple[LatticeModel, dict[str, Any]]:
    """Parse a TOML model file.  Returns the model and the raw ``[zone]`` table."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    raw.setdefault("name", Path(path).stem)
    return build_model(raw), dict(raw.get("zone", {}))


# --------------------------------------------------------------------------
# k-space grids


@dataclass(frozen=True)
class KGrid:
    """Quadrature rule on a k-space zone.

    ``weights`` sum to ``area``.  When the rule contains a nested rule of half
    the resolution on the same nodes, ``coarse_weights`` holds it (zero on
    unused nodes); comparing the two sums gives a cheap error estimate.
    """

    points: np.ndarray
    weights: np.ndarray
    area: float
    kind: str
    coarse_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.points, self.weights, self.coarse_weights):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float | complex:
        """Weighted sum over the leading axis (numpy pairwise summation)."""
        return np.sum(self.weights * values)

    def error_estimate(self, values: np.ndarray) -> float:
        if self.coarse_weights is None:
            return 0.0
        return float(abs(np.sum(self.weights * values) - np.sum(self.coarse_weights * values)))


@dataclass(frozen=True)
class ReciprocalCell:
    b1: np.ndarray
    b2: np.ndarray
    area: float
    grid: KGrid

    def duality_residual(self, model: LatticeModel) -> float:
        A = np.array([model.a1, model.a2])
        B = np.array([self.b1, self.b2])
        return float(np.max(np.abs(A @ B.T - 2 * np.pi * np.eye(2))))


def dual_vectors(a1, a2) -> tuple[np.ndarray, np.ndarray]:
    check_lattice(a1, a2)
    A = np.array([a1, a2], dtype=float)
    B = 2 * np.pi * np.linalg.inv(A).T
    return B[0], B[1]


def reciprocal(model: LatticeModel, n: int) -> ReciprocalCell:
    """Dual lattice and the ``n x n`` periodic trapezoid grid on the zone.

    Nodes are ``k = (m1/n) b1 + (m2/n) b2`` with equal weights ``|Omega*|/n^2``.
    For even ``n`` the sub-grid of even ``(m1, m2)`` is kept as the nested
    coarse rule.
    """
    if int(n) < 1:
        raise ConfigError(f"grid order must be >= 1, got {n}")
    n = int(n)
    b1, b2 = dual_vectors(model.a1, model.a2)
    area = (2 * np.pi) ** 2 / model.cell_area
    m = np.arange(n) / n
    f1, f2 = np.meshgrid(m, m, indexing="ij")
    pts = f1.reshape(-1, 1) * b1 + f2.reshape(-1, 1) * b2
    w = np.full(n * n, area / (n * n))
    coarse = None
    if n % 2 == 0 and n >= 2:
        even = ((np.arange(n)[:, None] % 2 == 0) & (np.arange(n)[None, :] % 2 == 0)).reshape(-1)
        coarse = np.where(even, 4 * area / (n * n), 0.0)
    return ReciprocalCell(b1, b2, area, KGrid(pts, w, area, "bz", coarse))


def _composite_gauss(a: float, b: float, edges: np.ndarray | None, order: int):
    """Composite Gauss-Legendre nodes on panels given by ``edges``."""
    x, w = np.polynomial.legendre.leggauss(order)
    if edges is None:
        edges = np.array([a, b])
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) / 2 + half * x
    weights = half * w
    return nodes.reshape(-1), weights.reshape(-1)


def square_grid(K: float, n: int = 64, order: int = 16) -> KGrid:
    """Tensor composite Gauss-Legendre rule on ``[-K, K]^2`` with about ``n`` nodes per axis."""
    if K <= 0:
        raise ConfigError(f"zone size K must be positive, got {K}")
    panels = max(1, round(n / order))
    x, w = _composite_gauss(-K, K, np.linspace(-K, K, panels + 1), order)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    pts = np.column_stack([X.reshape(-1), Y.reshape(-1)])
    return KGrid(pts, W.reshape(-1), (2 * K) ** 2, "square")


def disk_grid(
    K: float,
    n: int = 64,
    order: int = 16,
    ratio: float = 2.0,
    r_min: float = 1e-6,
) -> KGrid:
    """Polar rule on the disk ``|k| <= K``.

    Radial direction: composite Gauss-Legendre on geometrically growing panels
    ``[0, r_min K], [r_min K, ratio r_min K], ...`` so that features at small
    ``|k|`` are resolved.  Angular direction: ``max(8, n // 4)`` point periodic
    trapezoid rule (even count, so the every-other-angle coarse rule is kept).
    """
    if K <= 0:
        raise ConfigError(f"zone size K must be positive, got {K}")
    n_panels = max(1, math.ceil(math.log(1 / r_min) / math.log(ratio)))
    edges = np.concatenate([[0.0], K * r_min * ratio ** np.arange(n_panels), [K]])
    edges = edges[edges <= K]
    if edges[-1] != K:
        edges = np.append(edges, K)
    r, wr = _composite_gauss(0.0, K, np.unique(edges), order)
    n_theta = max(8, n // 4)
    n_theta += n_theta % 2
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(r, theta, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).reshape(-1), (R * np.sin(T)).reshape(-1)])
    wt = np.full(n_theta, 2 * np.pi / n_theta)
    W = np.outer(wr * r, wt)
    coarse = np.outer(wr * r, np.where(np.arange(n_theta) % 2 == 0, 2 * wt, 0.0))
    return KGrid(pts, W.reshape(-1), np.pi * K**2, "disk", coarse.reshape(-1))


@dataclass(frozen=True)
class Zone:
    """Truncated k-zone for continuum models: ``shape`` is ``"disk"`` or ``"square"``."""

    shape: str = "disk"
    K: float = 5.0

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ConfigError(f"zone shape must be 'disk' or 'square', got {self.shape!r}")
        if not (self.K > 0 and math.isfinite(self.K)):
            raise ConfigError(f"zone size K must be positive and finite, got {self.K}")

    @property
    def area(self) -> float:
        return math.pi * self.K**2 if self.shape == "disk" else (2 * self.K) ** 2

    def grid(self, n: int = 64) -> KGrid:
        if self.shape == "disk":
            return disk_grid(self.K, n)
        return square_grid(self.K, n)


def default_grid(model, n: int = 64) -> KGrid:
    """Grid of order ``n`` suited to the model kind."""
    if isinstance(model, LatticeModel):
        return reciprocal(model, n).grid
    return model.zone.grid(n)
