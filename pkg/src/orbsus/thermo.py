"""Grand-canonical thermodynamics and the contour-integral susceptibility.

``fermi_ln`` is ``ln(1 + z exp(-beta xi))`` with ``z = exp(beta mu)``.  The
susceptibility is evaluated as

    chi = 1/4 (e/c)^2 / (M |Omega*|) / beta  int dk  (i/2pi) oint_Gamma f(xi) Tr(P3 + P4 + P5)(k; xi) dxi

with ``Gamma`` the rectangle enclosing the spectrum whose horizontal legs sit
at ``Im xi = +-pi/(2 beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from ._kernels import apply_thread_cap, contour_sum, trace_table
from .bloch import BlochFiber, fiber
from .errors import (
    ConfigError,
    ContourTouchesSpectrum,
    OnSpectrum,
    OutsideStrip,
    QuadratureNotConverged,
    TargetOutOfRange,
)
from .lattice import KGrid, default_grid

GL_ORDER = 16
# multiple of eps * sum|terms| treated as the round-off floor of a contour sum
ROUNDOFF_FACTOR = 64


# --------------------------------------------------------------------------
# scalar thermodynamic functions


def fermi_ln(beta: float, mu: float, xi):
    """``ln(1 + exp(beta (mu - xi)))`` on the principal branch.

    Valid in the strip ``|Im(beta xi)| < pi``; raises :class:`OutsideStrip`
    elsewhere.  Evaluated as ``w + log1p(exp(-w))`` when ``Re w > 0`` so that
    nothing overflows deep below the chemical potential.
    """
    xi = np.asarray(xi, dtype=complex)
    if np.any(np.abs(beta * xi.imag) >= math.pi):
        raise OutsideStrip("fermi_ln needs |Im(beta xi)| < pi")
    w = beta * (mu - xi)
    pos = w.real > 0
    out = np.where(pos, w + np.log1p(np.exp(np.where(pos, -w, 0))), np.log1p(np.exp(np.where(pos, 0, w))))
    return out[()] if out.ndim == 0 else out


def fermi_dirac_derivs(beta: float, mu: float, E, lmax: int = 3) -> list:
    """Derivatives ``d^l f / dxi^l`` at real ``E`` for ``l = 0..lmax``.

    ``f(E) = ln(1 + exp(beta (mu - E)))``; with ``n = 1/(exp(beta (E - mu)) + 1)``:
    ``f' = -beta n``, ``f'' = beta^2 n (1 - n)``, ``f''' = -beta^3 n (1 - n)(1 - 2n)``.
    """
    if not 0 <= lmax <= 3:
        raise ConfigError("lmax must be in 0..3")
    E = np.asarray(E, dtype=float)
    x = beta * (mu - E)
    out = [np.logaddexp(0.0, x)]
    n = expit(x)
    m = expit(-x)  # 1 - n without cancellation
    if lmax >= 1:
        out.append(-beta * n)
    if lmax >= 2:
        out.append(beta**2 * n * m)
    if lmax >= 3:
        out.append(-(beta**3) * n * m * (m - n))
    return out


@dataclass(frozen=True)
class ThermoState:
    beta: float
    mu: float
    rho0: float | None = None

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive and finite, got {self.beta}")
        if not math.isfinite(self.mu):
            raise ConfigError(f"mu must be finite, got {self.mu}")

    @property
    def z(self) -> float:
        return math.exp(self.beta * self.mu)

    @classmethod
    def from_fugacity(cls, beta: float, z: float) -> "ThermoState":
        if z <= 0:
            raise ConfigError(f"fugacity must be positive, got {z}")
        return cls(beta, math.log(z) / beta)


# --------------------------------------------------------------------------
# fibers on a grid (small identity-keyed cache)

_FIBER_CACHE: list[tuple[object, KGrid, BlochFiber]] = []


def as_grid(model, zone) -> KGrid:
    if zone is None:
        return default_grid(model)
    if isinstance(zone, KGrid):
        return zone
    if isinstance(zone, (int, np.integer)):
        return default_grid(model, int(zone))
    raise ConfigError(f"cannot interpret zone {zone!r}")


def grid_fibers(model, grid: KGrid) -> BlochFiber:
    """Batched fibers of ``model`` on every node of ``grid`` (cached)."""
    for m, g, f in _FIBER_CACHE:
        if m is model and g is grid:
            return f
    f = fiber(model, grid.points)
    _FIBER_CACHE.append((model, grid, f))
    del _FIBER_CACHE[:-8]
    return f


# --------------------------------------------------------------------------
# bulk pressure and density


def _band_sum(grid: KGrid, values: np.ndarray, M: int) -> float:
    return float(grid.integrate(values.sum(axis=-1))) / (M * grid.area)


def pressure_bulk(model, zone, state: ThermoState, tol: float | None = None) -> float:
    """``P = 1/(beta M |Omega*|) int dk sum_j ln(1 + z exp(-beta E_j(k)))``."""
    grid = as_grid(model, zone)
    E = grid_fibers(model, grid).E
    vals = np.logaddexp(0.0, state.beta * (state.mu - E)) / state.beta
    P = _band_sum(grid, vals, E.shape[-1])
    if tol is not None:
        err = grid.error_estimate(vals.sum(-1)) / (E.shape[-1] * grid.area)
        if err > tol * max(abs(P), 1e-300):
            raise QuadratureNotConverged(f"pressure: coarse/fine grids differ by {err:.3g}")
    return P


def _density_from_E(grid: KGrid, E: np.ndarray, beta: float, mu: float) -> float:
    return _band_sum(grid, expit(beta * (mu - E)), E.shape[-1])


def density_bulk(model, zone, beta: float, mu: float, tol: float | None = None) -> float:
    """Particles per site, ``1/(M |Omega*|) int dk sum_j n_FD(E_j(k))``."""
    grid = as_grid(model, zone)
    E = grid_fibers(model, grid).E
    rho = _density_from_E(grid, E, beta, mu)
    if tol is not None:
        vals = expit(beta * (mu - E)).sum(-1)
        err = grid.error_estimate(vals) / (E.shape[-1] * grid.area)
        if err > tol * rho:
            raise QuadratureNotConverged(f"density: coarse/fine grids differ by {err:.3g}")
    return rho


def solve_mu(grid: KGrid, E: np.ndarray, beta: float, rho0: float) -> float:
    """Chemical potential with density ``rho0`` for sampled bands ``E``."""
    if not (0.0 < rho0 < 1.0):
        raise TargetOutOfRange(f"rho0 must lie in (0, 1), got {rho0}")

    def g(mu):
        return _density_from_E(grid, E, beta, mu) - rho0

    span = float(E.max() - E.min()) + 1.0
    lo, hi = float(E.min()) - span, float(E.max()) + span
    for _ in range(200):
        if g(lo) < 0:
            break
        lo -= span
        span *= 2
    for _ in range(200):
        if g(hi) > 0:
            break
        hi += span
        span *= 2
    glo, ghi = g(lo), g(hi)
    if not (glo < 0 < ghi):
        raise TargetOutOfRange(f"cannot bracket density {rho0} at beta={beta}")
    mu = brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    # one Newton step on the monotone density curve
    res = g(mu)
    slope = _band_sum(grid, beta * expit(beta * (mu - E)) * expit(-beta * (mu - E)), E.shape[-1])
    if slope > 0:
        cand = mu - res / slope
        if abs(g(cand)) < abs(res):
            mu = cand
    return float(mu)


def invert_density(model, zone, beta: float, rho0: float) -> float:
    """Chemical potential ``mu0`` with ``density_bulk(mu0) = rho0``.

    Brent's method on a bracket widened until it straddles the target (the
    density is strictly increasing in ``mu``), followed by one Newton step.
    """
    grid = as_grid(model, zone)
    return solve_mu(grid, grid_fibers(model, grid).E, beta, rho0)


# --------------------------------------------------------------------------
# contour


@dataclass(frozen=True)
class ContourSpec:
    """Rectangle around the spectrum with composite Gauss-Legendre nodes.

    The four legs are traversed counter-clockwise.  ``nodes`` and ``weights``
    include the Jacobian ``dxi/dt``.
    """

    beta: float
    delta_minus: float
    delta_plus: float
    halfheight: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    level: int = 0

    def contains(self, E) -> bool:
        E = np.asarray(E)
        return bool(np.all((E > self.delta_minus) & (E < self.delta_plus)))

    def distance_to(self, E) -> float:
        E = np.asarray(E, dtype=float)
        horiz = self.halfheight
        vert = min(np.min(E - self.delta_minus), np.min(self.delta_plus - E))
        return float(min(horiz, vert))


def _gl_segment(z0: complex, z1: complex, panels: int, order: int = GL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    t = np.linspace(0.0, 1.0, panels + 1)
    a, b = t[:-1, None], t[1:, None]
    s = (a + b) / 2 + (b - a) / 2 * x
    ws = (b - a) / 2 * w
    return (z0 + (z1 - z0) * s).reshape(-1), ((z1 - z0) * ws).reshape(-1)


def make_contour(beta: float, e_min: float, e_max: float, level: int = 0, margin: float = 1.0) -> ContourSpec:
    """Contour with legs at ``Re xi = e_min - margin, e_max + margin`` and ``Im xi = +-pi/(2 beta)``.

    Horizontal legs are split into panels no wider than the half-height (the
    distance from a leg to the nearest singularity); ``level`` doubles the
    panel count that many times.
    """
    if not (beta > 0 and math.isfinite(beta)):
        raise ConfigError(f"beta must be positive and finite, got {beta}")
    h = math.pi / (2 * beta)
    dm, dp = e_min - margin, e_max + margin
    n_h = max(1, math.ceil((dp - dm) / h)) * 2**level
    n_v = max(1, math.ceil(2 * h / min(h, margin))) * 2**level
    legs = [
        _gl_segment(complex(dm, -h), complex(dp, -h), n_h),
        _gl_segment(complex(dp, -h), complex(dp, h), n_v),
        _gl_segment(complex(dp, h), complex(dm, h), n_h),
        _gl_segment(complex(dm, h), complex(dm, -h), n_v),
    ]
    nodes = np.concatenate([z for z, _ in legs])
    weights = np.concatenate([w for _, w in legs])
    return ContourSpec(beta, dm, dp, h, nodes, weights, level)


# --------------------------------------------------------------------------
# traces


def trace_terms_eigen(pi: np.ndarray, sg: np.ndarray, E: np.ndarray, xi) -> np.ndarray:
    """``Tr(P3 + P4 + P5)`` for a batch of fibers at each ``xi``; shape ``(n_k, n_xi)``.

    Uses eigenbasis matrix elements ``pi`` ``(n, 2, M, M)`` and ``sg``
    ``(n, 3, M, M)`` with band energies ``E`` ``(n, M)``.
    """
    apply_thread_cap()
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    return trace_table(np.ascontiguousarray(pi), np.ascontiguousarray(sg), np.ascontiguousarray(E), xi)


def trace_P(f: BlochFiber, xi: complex, parts: bool = False):
    """``Tr(P3 + P4 + P5)(k; xi)`` for a single fiber.

    With ``parts=True`` returns the tuple ``(Tr P3, Tr P4, Tr P5)``, each built
    in the site basis by dense products with the resolvent.
    """
    from .bloch import resolvent

    R = resolvent(f, xi)
    d1, d2 = f.dH[0], f.dH[1]
    h11, h12, h22 = f.ddH[0], f.ddH[1], f.ddH[2]
    A = d1 @ R @ d2 - d2 @ R @ d1
    B = d2 @ R @ d1 - d1 @ R @ d2
    P5 = R @ A @ R @ B @ R
    P4 = R @ (h11 @ R @ d2 @ R @ d2 - h12 @ R @ (d1 @ R @ d2 + d2 @ R @ d1) + h22 @ R @ d1 @ R @ d1) @ R
    P3 = -R @ (0.5 * h11 @ R @ h22 + 0.5 * h22 @ R @ h11 - h12 @ R @ h12) @ R
    t3, t4, t5 = np.trace(P3), np.trace(P4), np.trace(P5)
    if parts:
        return complex(t3), complex(t4), complex(t5)
    return complex(t3 + t4 + t5)


def contour_values(f: BlochFiber, spec: ContourSpec, mu: float, with_magnitude: bool = False):
    """Per-k contour integrals ``(i/2pi) oint f(xi) Tr(P3+P4+P5)(k; xi) dxi``.

    With ``with_magnitude=True`` also returns the per-k sums of the absolute
    values of the quadrature terms.
    """
    if not f.batched:
        f = BlochFiber(f.k[None], f.H[None], f.dH[None], f.ddH[None], f.E[None], f.U[None])
    if not spec.contains(f.E):
        raise ContourTouchesSpectrum("band energies lie outside the contour")
    if spec.distance_to(f.E) < 1e-10:
        raise ContourTouchesSpectrum("band energies within 1e-10 of the contour")
    xi = spec.nodes
    wf = spec.weights * fermi_ln(spec.beta, mu, xi) * (1j / (2 * np.pi))
    apply_thread_cap()
    vals, mag = contour_sum(
        np.ascontiguousarray(f.pi()), np.ascontiguousarray(f.sigma()), np.ascontiguousarray(f.E), xi, wf
    )
    return (vals, mag) if with_magnitude else vals


# --------------------------------------------------------------------------
# susceptibility


@dataclass(frozen=True)
class ChiResult:
    """Susceptibility with diagnostics.

    ``err_estimate`` combines the contour panel-doubling change (contour path)
    and the nested coarse-grid change in k when the grid provides one.
    """

    chi: float
    beta: float | None
    rho0: float
    mu0: float
    method: str
    err_estimate: float = 0.0
    chi_P: float | None = None
    chi_Ib: float | None = None
    n_fallback: int = 0
    imag_residual: float = 0.0
    n_k: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def row(self) -> dict:
        return {
            "beta": self.beta if self.beta is not None else math.inf,
            "rho0": self.rho0,
            "mu0": self.mu0,
            "chi": self.chi,
            "err_estimate": self.err_estimate,
        }


def chi_prefactor(M: int, area: float, beta: float, charge: float = 1.0) -> float:
    return 0.25 * charge**2 / (M * area * beta)


def chi_contour(
    model,
    zone=None,
    beta: float = 1.0,
    rho0: float = 0.5,
    tol: float = 1e-10,
    max_level: int = 4,
    charge: float = 1.0,
    margin: float = 1.0,
) -> ChiResult:
    """Susceptibility by direct contour quadrature of the trace formula.

    Parameters
    ----------
    model : LatticeModel or AnalyticFiber
    zone : KGrid, int or None
        k-grid (or grid order) for the zone integral.
    beta, rho0 : float
        Inverse temperature and density per site; ``mu0`` is solved for.
    tol : float
        Relative change between successive contour panel doublings at which
        the contour quadrature is accepted.
    charge : float
        Value of ``e/c``; ``chi`` scales with its square.

    Returns
    -------
    ChiResult
    """
    grid = as_grid(model, zone)
    f = grid_fibers(model, grid)
    mu0 = solve_mu(grid, f.E, beta, rho0)
    pref = chi_prefactor(f.M, grid.area, beta, charge)
    e_min, e_max = float(f.E.min()), float(f.E.max())

    # Stop when successive doublings agree to ``tol`` or to within the
    # round-off floor of the summands (reached when the contour integrand
    # cancels strongly, e.g. deep in a gap at low temperature).
    prev = None
    for level in range(max_level + 1):
        spec = make_contour(beta, e_min, e_max, level, margin)
        vals, mag = contour_values(f, spec, mu0, with_magnitude=True)
        chi_c = pref * grid.integrate(vals)
        floor = ROUNDOFF_FACTOR * np.finfo(float).eps * pref * float(grid.integrate(mag))
        if prev is not None:
            diff = abs(chi_c - prev)
            if diff <= max(tol * abs(chi_c), floor):
                break
        prev = chi_c
    else:
        raise QuadratureNotConverged(f"contour quadrature did not settle after {max_level} doublings")
    err = diff + pref * grid.error_estimate(vals)
    return ChiResult(
        float(chi_c.real),
        beta,
        rho0,
        mu0,
        "contour",
        float(err),
        imag_residual=float(abs(chi_c.imag)),
        n_k=len(grid),
        extra={"contour_level": level},
    )
