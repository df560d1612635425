"""Finite lattices with Peierls phases: the magnetic operator on a square
patch of cells, its grand-canonical pressure, and checks of the
gauge-invariant perturbation expansion of the resolvent in the field.

Sites are ``x = n1 a1 + n2 a2 + basis[s]`` with ``|n1|, |n2| <= N``; hoppings
leaving the patch are dropped (Dirichlet edges).  The magnetic phase is
``phi(x, y) = (y1 x2 - x1 y2) / 2`` and ``H_b(x, y) = exp(i b phi(x, y)) H0(x, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BoundaryProximity, ConfigError, EigSolverFailure, OnSpectrum, SizeLimit
from .lattice import LatticeModel

DEFAULT_SIZE_CAP = 20000
FD_STEP = 1e-4


def phase(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Magnetic phase ``phi(x, y) = (y1 x2 - x1 y2) / 2``; broadcasts over leading axes."""
    return 0.5 * (y[..., 0] * x[..., 1] - x[..., 0] * y[..., 1])


def flux(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Unit-field flux through the triangle ``(u, v, w)``."""
    return phase(u, v) + phase(v, w) + phase(w, u)


@dataclass(frozen=True)
class FiniteLattice:
    """Sites of the ``(2N+1) x (2N+1)`` patch of cells around the origin."""

    model: LatticeModel
    N: int
    cells: np.ndarray = field(repr=False)  # (n_sites, 2) integer cell index
    species: np.ndarray = field(repr=False)  # (n_sites,) basis index
    sites: np.ndarray = field(repr=False)  # (n_sites, 2) positions

    @classmethod
    def build(cls, model: LatticeModel, N: int) -> "FiniteLattice":
        if int(N) != N or N < 1:
            raise ConfigError(f"patch half-width N must be an integer >= 1, got {N}")
        N = int(N)
        r = np.arange(-N, N + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        cells = np.repeat(np.stack([n1.ravel(), n2.ravel()], axis=1), model.M, axis=0)
        species = np.tile(np.arange(model.M), len(r) ** 2)
        a = np.array([model.a1, model.a2], float)
        basis = np.asarray(model.basis, float)
        sites = cells @ a + basis[species]
        return cls(model, N, cells, species, sites)

    def __len__(self) -> int:
        return len(self.sites)

    def ordinal(self, cell, s: int) -> int:
        """Index of basis site ``s`` in cell ``cell``."""
        n1, n2 = int(cell[0]), int(cell[1])
        if max(abs(n1), abs(n2)) > self.N or not 0 <= s < self.model.M:
            raise KeyError(f"site {s} of cell {cell} is outside the patch")
        side = 2 * self.N + 1
        return ((n1 + self.N) * side + (n2 + self.N)) * self.model.M + s

    @cached_property
    def bonds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(rows, cols, t)`` of every hopping ``H0(x, y)`` with both ends in the patch."""
        rows, cols, amps = [], [], []
        n = self.cells
        for h in self.model.hoppings:
            src = n[self.species == h.j]  # y cells
            tgt = src + np.asarray(h.cell)
            keep = np.max(np.abs(tgt), axis=1) <= self.N
            side = 2 * self.N + 1
            iy = ((src[keep, 0] + self.N) * side + src[keep, 1] + self.N) * self.model.M + h.j
            ix = ((tgt[keep, 0] + self.N) * side + tgt[keep, 1] + self.N) * self.model.M + h.i
            rows.append(ix)
            cols.append(iy)
            amps.append(np.full(len(ix), h.t, complex))
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(amps)

    @cached_property
    def phase_matrix(self) -> np.ndarray:
        """Dense ``phi(x, y)`` over all site pairs."""
        x = self.sites
        return 0.5 * (np.outer(x[:, 1], x[:, 0]) - np.outer(x[:, 0], x[:, 1]))

    def boundary_distance(self) -> np.ndarray:
        """Distance from each site to the nearest lattice site outside the patch."""
        model = self.model
        a = np.array([model.a1, model.a2], float)
        basis = np.asarray(model.basis, float)
        reach = max(model.cutoff, 1.0) * 4
        # one ring of outside cells is enough when the ring is wider than ``reach``
        width = int(math.ceil(reach / min(np.linalg.norm(a, axis=1)))) + 1
        r = np.arange(-self.N - width, self.N + width + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        out = np.maximum(np.abs(n1), np.abs(n2)).ravel() > self.N
        cells = np.stack([n1.ravel()[out], n2.ravel()[out]], axis=1)
        outside = (cells @ a)[:, None, :] + basis[None, :, :]
        outside = outside.reshape(-1, 2)
        best = np.full(len(self), np.inf)
        for chunk in np.array_split(outside, max(1, len(outside) // 2048)):
            dist = np.linalg.norm(self.sites[:, None, :] - chunk[None, :, :], axis=-1)
            best = np.minimum(best, dist.min(axis=1))
        return best

    def interior(self, margin: float | None = None) -> np.ndarray:
        """Indices of sites at least ``margin`` (default twice the hopping cutoff) from the edge."""
        margin = 2 * self.model.cutoff if margin is None else margin
        return np.flatnonzero(self.boundary_distance() >= margin)


@dataclass(frozen=True)
class MagneticOperator:
    lattice: FiniteLattice
    b: float
    Hmat: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.Hmat.shape[0]

    def eigvalsh(self) -> np.ndarray:
        try:
            E = np.linalg.eigvalsh(self.Hmat)
        except np.linalg.LinAlgError as exc:
            raise EigSolverFailure(f"dense eigensolver failed: {exc}") from exc
        if not np.all(np.isfinite(E)):
            raise EigSolverFailure("dense eigensolver returned non-finite values")
        return E

    def resolvent(self, xi: complex) -> np.ndarray:
        E = self.eigvalsh()
        dist = np.min(np.abs(E - xi))
        if dist <= 1e-12 * (E[-1] - E[0] + 1.0):
            raise OnSpectrum(f"xi={xi} lies within {dist:.3g} of the finite-lattice spectrum")
        return np.linalg.inv(self.Hmat - xi * np.eye(self.dim))

    def covariance_residual(self, shift) -> float:
        """Largest violation of ``H_b(x+v, y+v) e^{i b phi(y, v)} = e^{i b phi(x, v)} H_b(x, y)``.

        ``shift`` is an integer cell translation; only bonds whose shifted
        copy stays inside the patch are compared.
        """
        lat = self.lattice
        m = lat.model
        v = shift[0] * np.asarray(m.a1) + shift[1] * np.asarray(m.a2)
        rows, cols, _ = lat.bonds
        worst = 0.0
        for x, y in zip(rows, cols):
            cx, cy = lat.cells[x] + shift, lat.cells[y] + shift
            if max(np.max(np.abs(cx)), np.max(np.abs(cy))) > lat.N:
                continue
            xs = lat.ordinal(cx, lat.species[x])
            ys = lat.ordinal(cy, lat.species[y])
            lhs = self.Hmat[xs, ys] * np.exp(1j * self.b * phase(lat.sites[y], v))
            rhs = np.exp(1j * self.b * phase(lat.sites[x], v)) * self.Hmat[x, y]
            worst = max(worst, abs(lhs - rhs))
        return worst


def build_harper(model: LatticeModel, N: int, b: float, size_cap: int = DEFAULT_SIZE_CAP) -> MagneticOperator:
    """Dense magnetic operator ``H_{N,b}`` of ``model`` on the ``N`` patch."""
    if not isinstance(model, LatticeModel):
        raise ConfigError("finite-lattice studies need a hopping-table model")
    dim = (2 * int(N) + 1) ** 2 * model.M
    if dim > size_cap:
        raise SizeLimit(f"patch dimension {dim} exceeds the cap {size_cap}")
    lat = FiniteLattice.build(model, N)
    rows, cols, t = lat.bonds
    H = np.zeros((dim, dim), complex)
    phi = phase(lat.sites[rows], lat.sites[cols])
    np.add.at(H, (rows, cols), np.exp(1j * b * phi) * t)
    return MagneticOperator(lat, float(b), H)


def pressure_from_levels(E: np.ndarray, beta: float, z: float, n_sites: int) -> float:
    """``(1/(beta n)) sum_j ln(1 + z e^{-beta E_j})`` without overflow."""
    if not (beta > 0 and z > 0):
        raise ConfigError("pressure needs beta > 0 and z > 0")
    u = math.log(z) - beta * np.asarray(E, float)
    return float(np.sum(np.logaddexp(0.0, u)) / (beta * n_sites))


def pressure_N(op: MagneticOperator, beta: float, z: float) -> float:
    """Grand-canonical pressure per site of the finite magnetic operator."""
    return pressure_from_levels(op.eigvalsh(), beta, z, op.dim)


@dataclass(frozen=True)
class PressureStudy:
    N: np.ndarray
    P_N: np.ndarray
    P_bulk: float

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.P_N - self.P_bulk)

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0))


def pressure_study(model: LatticeModel, Ns, beta: float, z: float, b: float = 0.0, P_bulk: float | None = None):
    """``P_N`` for each ``N`` together with the bulk pressure at ``b = 0``."""
    from .thermo import ThermoState, pressure_bulk

    Ns = np.asarray(list(Ns), int)
    P = np.array([pressure_N(build_harper(model, n, b), beta, z) for n in Ns])
    if P_bulk is None:
        P_bulk = pressure_bulk(model, 256, ThermoState.from_fugacity(beta, z))
    return PressureStudy(Ns, P, float(P_bulk))


def extrapolate_pressure(Ns, P_N, degree: int = 2) -> float:
    """Edge-corrected limit of ``P_N`` from a least-squares fit in powers of ``1/N``.

    The open edges contribute a perimeter-to-area term, so ``P_N`` behaves as
    ``P + c1/N + c2/N^2 + ...``; the constant of the fit estimates ``P``.
    """
    Ns = np.asarray(Ns, float)
    P_N = np.asarray(P_N, float)
    if len(Ns) <= degree:
        raise ConfigError(f"need more than {degree} sizes to fit a degree-{degree} edge correction")
    V = np.vander(1.0 / Ns, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, P_N, rcond=None)
    return float(coef[0])


# --------------------------------------------------------------------------
# gauge-invariant perturbation kernels


def _check_interior(lat: FiniteLattice, sites, margin: float | None) -> None:
    inner = set(lat.interior(margin).tolist())
    for s in sites:
        if int(s) not in inner:
            raise BoundaryProximity(f"site {s} is within the boundary margin of the N={lat.N} patch")


def _bond_arrays(op: MagneticOperator):
    """Nonzero entries ``(z1, z2, H(z1, z2))`` of the magnetic operator, on-site terms excluded.

    On-site entries carry zero flux and never contribute to the kernels.
    """
    rows, cols = np.nonzero(op.Hmat)
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    return rows, cols, op.Hmat[rows, cols]


def kernel_db(op: MagneticOperator, x: int, y: int, xi: complex, order: int = 1, margin: float | None = None):
    """``b``-derivative of the resolvent kernel ``R_b(x, y; xi)`` at ``b0 = op.b``.

    Evaluated from the flux-weighted bond sums of the gauge-invariant
    expansion; only ``H_{b0}`` and ``R_{b0}`` enter.  ``order=2`` returns the
    second derivative, i.e. twice the ``delta b^2`` coefficient of the
    expansion.
    """
    if order not in (1, 2):
        raise ConfigError("kernel order must be 1 or 2")
    lat = op.lattice
    _check_interior(lat, (x, y), margin)
    R = op.resolvent(xi)
    X = lat.sites
    z1, z2, h = _bond_arrays(op)
    phi_xy = phase(X[x], X[y])
    fl_y = flux(X[z1], X[z2], X[y])  # fl(z1, z2, y) per bond
    left = R[x, z1]
    right = R[z2, y]
    if order == 1:
        return complex(1j * phi_xy * R[x, y] - 1j * np.sum(left * fl_y * h * right))

    coeff = 0.0j
    if x != y:
        coeff += -0.5 * phi_xy**2 * R[x, y]
        coeff += np.sum(left * (phase(X[x], X[z1]) + phase(X[z1], X[y])) * fl_y * h * right)
    coeff += 0.5 * np.sum(left * fl_y**2 * h * right)
    # chained pair of bonds: R(x,z1) fl(z1,z2,z3) H(z1,z2) R(z2,z3) fl(z3,z4,y) H(z3,z4) R(z4,y)
    first = left * h  # indexed by bond (z1, z2)
    second = fl_y * h * right  # indexed by bond (z3, z4)
    fl_chain = flux(X[z1][:, None, :], X[z2][:, None, :], X[z1][None, :, :])  # z3 of bond b' is its z1
    middle = R[np.ix_(z2, z1)]  # R(z2 of b, z3 of b')
    coeff -= first @ (fl_chain * middle) @ second
    return complex(2 * coeff)


def kernel_fd(
    model: LatticeModel,
    N: int,
    b0: float,
    x: int,
    y: int,
    xi: complex,
    order: int = 1,
    h: float = FD_STEP,
    richardson: bool = True,
):
    """Central finite difference of ``R_b(x, y; xi)`` in ``b``.

    With ``richardson=True`` the steps ``h`` and ``h/2`` are combined to cancel
    the ``h^2`` truncation term.
    """
    if order not in (1, 2):
        raise ConfigError("finite-difference order must be 1 or 2")
    cache: dict[float, complex] = {}

    def R(b):
        if b not in cache:
            cache[b] = build_harper(model, N, b).resolvent(xi)[x, y]
        return cache[b]

    def diff(step):
        if order == 1:
            return (R(b0 + step) - R(b0 - step)) / (2 * step)
        return (R(b0 + step) - 2 * R(b0) + R(b0 - step)) / step**2

    if not richardson:
        return complex(diff(h))
    return complex((4 * diff(h / 2) - diff(h)) / 3)


def ttilde(op: MagneticOperator, delta_b: float, xi: complex) -> np.ndarray:
    """Dense ``T~(x, y) = e^{i db phi(x,y)} sum_z (e^{i db fl(x,z,y)} - 1) H_{b0}(x,z) R_{b0}(z,y)``."""
    R = op.resolvent(xi)
    Phi = op.lattice.phase_matrix
    T = np.zeros_like(R)
    xs, zs, h = _bond_arrays(op)
    for x, z, hv in zip(xs, zs, h):
        fl = Phi[x, z] + Phi[z, :] + Phi[:, x]
        T[x, :] += (np.exp(1j * delta_b * fl) - 1.0) * hv * R[z, :]
    return np.exp(1j * delta_b * Phi) * T


def ttilde_norm(op: MagneticOperator, delta_b: float, xi: complex) -> float:
    """Operator norm (largest singular value) of ``T~``."""
    if delta_b == 0:
        return 0.0
    return float(np.linalg.norm(ttilde(op, delta_b, xi), 2))


def identity_residual(model: LatticeModel, N: int, b0: float, delta_b: float, xi: complex) -> float:
    """Operator norm of ``R_b - R~_b + R_b T~_b`` with ``b = b0 + delta_b``."""
    op0 = build_harper(model, N, b0)
    R0 = op0.resolvent(xi)
    Rb = build_harper(model, N, b0 + delta_b).resolvent(xi)
    Rt = np.exp(1j * delta_b * op0.lattice.phase_matrix) * R0
    return float(np.linalg.norm(Rb - Rt + Rb @ ttilde(op0, delta_b, xi), 2))


def spectrum_bound(model: LatticeModel, N: int, bs) -> np.ndarray:
    """``||H_{N,b}||`` for each ``b``, next to the field-free Schur bound ``max_x sum_y |H0(x,y)|``."""
    return np.array([np.max(np.abs(build_harper(model, N, b).eigvalsh())) for b in bs])


def schur_bound(model: LatticeModel) -> float:
    rows = np.zeros(model.M)
    for h in model.hoppings:
        rows[h.i] += abs(h.t)
    return float(rows.max())


def kernel_decay_rate(op: MagneticOperator, xi: complex, x: int | None = None) -> float:
    """Fitted slope of ``log |R(x, y)|`` against ``|x - y|``; negative for a decaying kernel."""
    lat = op.lattice
    R = op.resolvent(xi)
    if x is None:
        x = int(np.argmin(np.linalg.norm(lat.sites, axis=1)))
    inner = lat.interior()
    d = np.linalg.norm(lat.sites[inner] - lat.sites[x], axis=1)
    mag = np.abs(R[x, inner])
    ok = (d > 0) & (mag > 0)
    slope, _ = np.polyfit(d[ok], np.log(mag[ok]), 1)
    return float(slope)
