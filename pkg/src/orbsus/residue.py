"""Band expansion of the susceptibility by exact residue calculus.

In the eigenbasis of ``H(k)`` every trace ``Tr P_l(k; xi)`` is a sum over
band-index tuples of a coefficient ``C`` times a product of poles
``1/(E_j - xi)``.  Integrating ``f(xi)`` against each product with the residue
theorem leaves derivatives ``d^l f(E_j)``, ``l = 0..3``, multiplied by
beta-independent weights ``d_{j,l}(k)``:

    (i/2pi) oint f Tr(P3 + P4 + P5) dxi = - sum_{j,l} d^l f(E_j) d_{j,l}.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochFiber, band_derivatives
from .errors import (
    BadArity,
    ComputeError,
    DegenerateBand,
    DegenerateFallback,
    NonIntegerFilling,
    NotSemiconducting,
    NotTwoBand,
)
from .thermo import (
    ChiResult,
    as_grid,
    chi_prefactor,
    contour_values,
    fermi_dirac_derivs,
    grid_fibers,
    make_contour,
    solve_mu,
)


@dataclass(frozen=True)
class MatrixElements:
    """``pi[..., a, l, m] = <u_l| dH_a |u_m>`` and ``sigma[..., c, l, m]`` for ``c`` in (11, 12, 22)."""

    pi: np.ndarray
    sigma: np.ndarray

    @property
    def M(self) -> int:
        return self.pi.shape[-1]


def matrix_elements(f: BlochFiber) -> MatrixElements:
    return MatrixElements(f.pi(), f.sigma())


# --------------------------------------------------------------------------
# coefficient functions


def _loop3(pa, pb):
    """``X[..., j1, j2, j3] = pa[j1, j2] pb[j2, j3]``."""
    return pa[..., :, :, None] * pb[..., None, :, :]


def coefficient_tensors(me: MatrixElements) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All coefficients at once: ``C4[..., j1, j2, j3, j4]``, ``C3[..., j1, j2, j3]``, ``C2[..., j1, j2]``."""
    p1, p2 = me.pi[..., 0, :, :], me.pi[..., 1, :, :]
    s11, s12, s22 = me.sigma[..., 0, :, :], me.sigma[..., 1, :, :], me.sigma[..., 2, :, :]
    # first bracket  {pi1_{j1j2} pi2_{j2j3} - pi2_{j1j2} pi1_{j2j3}}
    left = _loop3(p1, p2) - _loop3(p2, p1)
    # second bracket {pi2_{j3j4} pi1_{j4j1} - pi1_{j3j4} pi2_{j4j1}}, indexed [j3, j4, j1]
    right = _loop3(p2, p1) - _loop3(p1, p2)
    C4 = np.einsum("...abc,...cda->...abcd", left, right)
    C3 = (
        _chain3(s11, p2, p2)
        + _chain3(s22, p1, p1)
        - _chain3(s12, p1, p2)
        - _chain3(s12, p2, p1)
    )
    C2 = -np.real(s11 * np.swapaxes(s22, -1, -2)) + s12 * np.swapaxes(s12, -1, -2)
    return C4, C3, C2


def _chain3(a, b, c):
    """``a[j1, j2] b[j2, j3] c[j3, j1]`` as a tensor over ``(j1, j2, j3)``."""
    return a[..., :, :, None] * b[..., None, :, :] * np.swapaxes(c, -1, -2)[..., :, None, :]


def coeff_C(me: MatrixElements, indices) -> complex:
    """Evaluate one coefficient ``C_{j1..jn}`` (0-based indices, arity 2, 3 or 4)."""
    idx = tuple(int(i) for i in indices)
    p1, p2 = me.pi[..., 0, :, :], me.pi[..., 1, :, :]
    s11, s12, s22 = me.sigma[..., 0, :, :], me.sigma[..., 1, :, :], me.sigma[..., 2, :, :]
    if len(idx) == 4:
        a, b, c, d = idx
        first = p1[..., a, b] * p2[..., b, c] - p2[..., a, b] * p1[..., b, c]
        second = p2[..., c, d] * p1[..., d, a] - p1[..., c, d] * p2[..., d, a]
        return first * second
    if len(idx) == 3:
        a, b, c = idx
        return (
            s11[..., a, b] * p2[..., b, c] * p2[..., c, a]
            + s22[..., a, b] * p1[..., b, c] * p1[..., c, a]
            - s12[..., a, b] * p1[..., b, c] * p2[..., c, a]
            - s12[..., a, b] * p2[..., b, c] * p1[..., c, a]
        )
    if len(idx) == 2:
        a, b = idx
        return -np.real(s11[..., a, b] * s22[..., b, a]) + s12[..., a, b] * s12[..., b, a]
    raise BadArity(f"coefficient arity must be 2, 3 or 4, got {len(idx)}")


# --------------------------------------------------------------------------
# residue engine


def _series(delta: np.ndarray, m: int, order: int) -> np.ndarray:
    """Taylor coefficients in ``t`` of ``(delta - t)^(-m)`` up to ``t^order``."""
    r = np.arange(order + 1)
    binom = np.array([math.comb(m + k - 1, k) for k in r], dtype=float)
    return binom * delta[..., None] ** (-(m + r))


def _convolve(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for i in range(order + 1):
        out[..., i:] += a[..., i : i + 1] * b[..., : order + 1 - i]
    return out


def pole_residues(E: np.ndarray, poles: tuple[tuple[int, int], ...]) -> dict[int, np.ndarray]:
    """Residue coefficients of ``(i/2pi) oint f(xi) prod_p (E_p - xi)^(-m_p) dxi``.

    ``poles`` lists ``(label, multiplicity)`` with distinct labels indexing the
    last axis of ``E``.  Returns, per label, an array ``(..., 4)`` whose entry
    ``l`` multiplies ``d^l f(E_label)``.

    For a pole of order ``m`` at ``E_p`` the rule
    ``(i/2pi) oint g(xi) (E_p - xi)^(-m) = (-1)^(m+1) g^(m-1)(E_p)/(m-1)!``
    with ``g = f Q`` and the Leibniz rule gives
    ``(-1)^(m+1) sum_l f^(l)(E_p)/l! q_(m-1-l)`` where ``q_r`` are the Taylor
    coefficients of ``Q`` at ``E_p``.
    """
    out = {}
    for p, m in poles:
        order = m - 1
        q = np.ones(E.shape[:-1] + (order + 1,))
        q[..., 1:] = 0.0
        for s, ms in poles:
            if s == p:
                continue
            q = _convolve(q, _series(E[..., s] - E[..., p], ms, order), order)
        coef = np.zeros(E.shape[:-1] + (4,))
        sign = (-1.0) ** (m + 1)
        for l in range(min(m, 4)):
            coef[..., l] = sign * q[..., order - l] / math.factorial(l)
        out[p] = coef
    return out


# pole multiplicity of each tuple position for Tr P5, Tr P4, Tr P3
_POWERS = {4: (2, 1, 1, 1), 3: (2, 1, 1), 2: (2, 1)}


def _pattern(labels: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    mult: dict[int, int] = defaultdict(int)
    for lab, pw in zip(labels, _POWERS[len(labels)]):
        mult[lab] += pw
    return tuple(sorted(mult.items()))


def _engine(E_cl: np.ndarray, tensors, cluster: tuple[int, ...]) -> np.ndarray:
    """Weights per cluster for a batch sharing the band->cluster map ``cluster``."""
    n_cl = E_cl.shape[-1]
    acc: dict[tuple, np.ndarray] = {}
    for C in tensors:
        arity = C.ndim - (E_cl.ndim - 1)
        M = C.shape[-1]
        for tup in itertools.product(range(M), repeat=arity):
            pat = _pattern(tuple(cluster[j] for j in tup))
            val = C[(Ellipsis,) + tup]
            if pat in acc:
                acc[pat] = acc[pat] + val
            else:
                acc[pat] = np.asarray(val, dtype=complex).copy()
    d = np.zeros(E_cl.shape[:-1] + (n_cl, 4), dtype=complex)
    for pat, coeff in acc.items():
        for p, coef in pole_residues(E_cl, pat).items():
            d[..., p, :] -= coeff[..., None] * coef
    return d


@dataclass(frozen=True)
class BandWeights:
    """Residue weights ``d[..., j, l]``.

    Stored complex: the weights at a single k need not be real (for a
    time-reversal symmetric model the imaginary parts at ``k`` and ``-k``
    cancel), only the zone integral is.  ``merged[..., j]`` marks bands whose
    weight was booked on a lower band of the same degenerate cluster.
    """

    d: np.ndarray
    merged: np.ndarray | None = field(default=None, repr=False)

    def integrated_imag_ratio(self, weights: np.ndarray) -> float:
        """``|Im sum_k w d| / |sum_k w d|`` per ``(j, l)``, maximised; a reality check on the zone integral."""
        tot = np.tensordot(weights, self.d, axes=(0, 0)).sum(0)
        scale = np.max(np.abs(tot))
        return float(np.max(np.abs(tot.imag)) / scale) if scale > 0 else 0.0


def _clusters(E: np.ndarray, tol: float) -> tuple[int, ...]:
    lab = [0]
    for j in range(1, len(E)):
        lab.append(lab[-1] + (E[j] - E[j - 1] > tol))
    return tuple(lab)


def residue_weights(f: BlochFiber, on_degenerate: str = "raise", me: MatrixElements | None = None) -> BandWeights:
    """Weights ``d_{j,l}(k)`` with ``(i/2pi) oint f Tr(P3+P4+P5) = -sum d^l f(E_j) d_{j,l}``.

    Parameters
    ----------
    f : BlochFiber
        Single or batched fiber.
    on_degenerate : {"raise", "merge"}
        What to do when two bands lie within the degeneracy threshold.
        ``"raise"`` throws :class:`DegenerateFallback`; ``"merge"`` fuses
        colliding poles into one higher-order pole at the cluster mean and
        books the weight on the lowest band of the cluster.
    """
    if on_degenerate not in ("raise", "merge"):
        raise ValueError("on_degenerate must be 'raise' or 'merge'")
    single = not f.batched
    if single:
        f = BlochFiber(f.k[None], f.H[None], f.dH[None], f.ddH[None], f.E[None], f.U[None])
        if me is not None:
            me = MatrixElements(me.pi[None], me.sigma[None])
    me = me or matrix_elements(f)
    tensors = coefficient_tensors(me)
    E = f.E
    M = f.M
    deg = f.degenerate() if M > 1 else np.zeros(len(E), bool)
    if np.any(deg) and on_degenerate == "raise":
        raise DegenerateFallback(f"{int(deg.sum())} k-point(s) with colliding bands")
    d = np.zeros(E.shape + (4,), complex)
    ident = tuple(range(M))
    ok = ~deg
    if np.any(ok):
        d[ok] = _engine(E[ok], [t[ok] for t in tensors], ident)
    merged = np.zeros(E.shape, bool)
    if np.any(deg):
        tol = f.deg_tol()
        groups: dict[tuple, list[int]] = defaultdict(list)
        for idx in np.flatnonzero(deg):
            groups[_clusters(E[idx], tol[idx])].append(idx)
        for cl, idxs in groups.items():
            idxs = np.asarray(idxs)
            n_cl = cl[-1] + 1
            rep = [cl.index(c) for c in range(n_cl)]
            E_cl = np.stack([E[idxs][:, [j for j in range(M) if cl[j] == c]].mean(-1) for c in range(n_cl)], -1)
            sub = np.zeros((len(idxs), M, 4), complex)
            sub[:, rep] = _engine(E_cl, [t[idxs] for t in tensors], cl)
            d[idxs] = sub
            for j in range(M):
                if j not in rep:
                    merged[idxs, j] = True
    if single:
        return BandWeights(d[0], merged[0])
    return BandWeights(d, merged)


# --------------------------------------------------------------------------
# two-band closed forms


def _two_band_C(me: MatrixElements, j: int):
    m = 1 - j

    def C(*ix):
        return coeff_C(me, [j if c == "j" else m for c in ix])

    return C


def two_band_u_v(me: MatrixElements, j: int) -> tuple[list, list]:
    """Coefficients ``u_{j,n}`` and ``v_{j,n}``, ``n = 0, 1, 2``, of a two-band fiber."""
    C = _two_band_C(me, j)
    u = [
        C("j", "m"),
        C("j", "m", "m") + C("m", "j", "j") - C("j", "m", "j") - C("j", "j", "m"),
        C("j", "m", "m", "m") - C("m", "j", "j", "j") - C("j", "j", "m", "m") - C("j", "m", "j", "m") - C("j", "m", "m", "j"),
    ]
    v = [
        np.zeros_like(u[0]),
        2 * C("j", "m", "m") + 2 * C("m", "j", "j") - C("j", "m", "j") - C("j", "j", "m") - C("m", "j", "m") - C("m", "m", "j"),
        2 * C("j", "m", "m", "m") - 2 * C("m", "j", "j", "j"),
    ]
    return u, v


def two_band_weights(f: BlochFiber, me: MatrixElements | None = None) -> np.ndarray:
    """Closed-form weights ``d_hat[..., j, l]`` for a two-band fiber (complex; real up to rounding)."""
    if f.M != 2:
        raise NotTwoBand(f"closed forms need two bands, got {f.M}")
    me = me or matrix_elements(f)
    E = f.E
    out = np.zeros(E.shape + (4,), complex)
    for j in (0, 1):
        m = 1 - j
        C = _two_band_C(me, j)
        dE = E[..., m] - E[..., j]
        out[..., j, 3] = (C("j", "j", "m", "j") / dE + C("j", "j", "j")) / 6
        out[..., j, 2] = -0.5 * (
            (C("j", "j", "m", "m") + C("j", "m", "j", "m") + C("j", "m", "m", "j")) / dE**2
            + (C("j", "m", "j") + C("j", "j", "m")) / dE
            + C("j", "j")
        )
        u, v = two_band_u_v(me, j)
        out[..., j, 1] = sum(u[n] / dE ** (n + 1) for n in range(3))
        out[..., j, 0] = sum(v[n] / dE ** (n + 2) for n in range(3))
    return out


# --------------------------------------------------------------------------
# susceptibility from the weights


def _weighted_sum(E, d, beta, mu):
    derivs = fermi_dirac_derivs(beta, mu, E, 3)
    return sum(derivs[l] * d[..., l] for l in range(4)).sum(-1)


def chi_residue(
    model,
    zone=None,
    beta: float = 1.0,
    rho0: float = 0.5,
    charge: float = 1.0,
    fallback_gap: float = 1e-3,
    weights: BandWeights | None = None,
) -> ChiResult:
    """Susceptibility from the residue weights.

    ``chi = -1/4 (e/c)^2 / (M |Omega*|) / beta  sum_j int dk sum_l d^l f(E_j) d_{j,l}``.

    k-points where two bands are closer than ``fallback_gap * (E_M - E_1 + 1)``
    (or the degeneracy threshold, whichever is larger) use the per-k contour
    integral instead of the weights.

    ``weights`` may carry a precomputed table for the same model and grid;
    the table is independent of ``beta`` and ``rho0``.
    """
    grid = as_grid(model, zone)
    f = grid_fibers(model, grid)
    mu0 = solve_mu(grid, f.E, beta, rho0)
    M = f.M
    if M > 1:
        thresh = np.maximum(fallback_gap * (f.E[:, -1] - f.E[:, 0] + 1.0), f.deg_tol())
        fb = f.min_gap() <= thresh
    else:
        fb = np.zeros(len(f.E), bool)
    vals = np.zeros(len(f.E), complex)
    if weights is None:
        weights = precompute_weights(f, fb)
    ok = ~fb
    vals[ok] = -_weighted_sum(f.E[ok], weights.d[ok], beta, mu0)
    if np.any(fb):
        spec = make_contour(beta, float(f.E.min()), float(f.E.max()))
        vals[fb] = contour_values(f[fb], spec, mu0)
    pref = chi_prefactor(M, grid.area, beta, charge)
    chi = pref * grid.integrate(vals)
    return ChiResult(
        float(chi.real),
        beta,
        rho0,
        mu0,
        "residue",
        float(pref * grid.error_estimate(vals)),
        n_fallback=int(fb.sum()),
        imag_residual=float(abs(chi.imag)),
        n_k=len(grid),
    )


def precompute_weights(f: BlochFiber, skip: np.ndarray | None = None) -> BandWeights:
    """Weight table on a batch of fibers; entries flagged in ``skip`` are left zero."""
    d = np.zeros(f.E.shape + (4,), complex)
    keep = np.ones(len(f.E), bool) if skip is None else ~skip
    if np.any(keep):
        d[keep] = residue_weights(f[keep], on_degenerate="merge").d
    return BandWeights(d)


def _filling(M: int, rho0: float) -> int:
    mf = rho0 * M
    n = round(mf)
    if abs(mf - n) > 1e-9 or not (1 <= n <= M - 1):
        raise NonIntegerFilling(f"rho0*M = {mf:g} is not an integer in 1..{M - 1}")
    return int(n)


def chi_zero_temperature(model, zone=None, rho0: float = 0.5, charge: float = 1.0) -> ChiResult:
    """Zero-temperature susceptibility of a band insulator.

    ``chi = 1/4 (e/c)^2 / (M |Omega*|) int dk sum_{filled j} [d_{j,1} + (E_j - E_F) d_{j,0}]``
    with ``E_F`` at mid-gap on the sampled grid.  For two bands the
    ``u``/``v`` form is evaluated as well and must agree.
    """
    grid = as_grid(model, zone)
    f = grid_fibers(model, grid)
    M = f.M
    mf = _filling(M, rho0)
    top, bottom = float(f.E[:, mf - 1].max()), float(f.E[:, mf].min())
    if not bottom - top > 1e-8 * (float(f.E.max() - f.E.min()) + 1.0):
        raise NotSemiconducting(f"no gap between bands {mf} and {mf + 1} on the sampled zone")
    EF = 0.5 * (top + bottom)
    w = residue_weights(f, on_degenerate="merge")
    filled = slice(0, mf)
    integrand = (w.d[:, filled, 1] + (f.E[:, filled] - EF) * w.d[:, filled, 0]).sum(-1)
    pref = 0.25 * charge**2 / (M * grid.area)
    chi_c = pref * grid.integrate(integrand)
    chi = float(chi_c.real)
    extra = {"E_F": EF, "gap": bottom - top}
    if M == 2:
        me = matrix_elements(f)
        u, v = two_band_u_v(me, 0)
        dE = f.E[:, 1] - f.E[:, 0]
        alt = sum(u[n] / dE ** (n + 1) + (f.E[:, 0] - EF) * v[n] / dE ** (n + 2) for n in range(3))
        chi_uv = pref * grid.integrate(alt)
        extra["chi_uv"] = float(chi_uv.real)
        scale = pref * grid.integrate(np.abs(alt)).real
        if abs(chi_uv - chi) > 1e-8 * max(scale, 1e-300):
            raise ComputeError(f"two-band zero-temperature forms disagree: {chi} vs {chi_uv.real}")
    return ChiResult(
        chi,
        None,
        rho0,
        EF,
        "zerot",
        float(pref * grid.error_estimate(integrand)),
        imag_residual=float(abs(chi_c.imag)),
        n_k=len(grid),
        extra=extra,
    )


def peierls_integrand_I(me: MatrixElements, E: np.ndarray, j: int) -> np.ndarray:
    """``I_j = 1/2 Re{-(C_jjmm + C_jmjm + C_jmmj)/(E_j - E_m)^2 + i Im(C_jmj)/(E_j - E_m)}``."""
    C = _two_band_C(me, j)
    dE = E[..., j] - E[..., 1 - j]
    inner = -(C("j", "j", "m", "m") + C("j", "m", "j", "m") + C("j", "m", "m", "j")) / dE**2 + 1j * np.imag(
        C("j", "m", "j")
    ) / dE
    return 0.5 * np.real(inner)


def peierls_split(model, zone=None, beta: float = 1.0, rho0: float = 0.5, charge: float = 1.0) -> ChiResult:
    """Split ``chi = chi_P + chi_Ib`` for a two-band model.

    ``chi_P`` is built from band curvatures (Hellmann-Feynman Hessians),
    ``chi_Ib`` from ``I_j`` and the closed-form weights ``d_hat_{j,0}``,
    ``d_hat_{j,1}``.  Returns a :class:`ChiResult` whose ``chi`` is their sum.
    """
    grid = as_grid(model, zone)
    f = grid_fibers(model, grid)
    if f.M != 2:
        raise NotTwoBand(f"the split needs exactly two bands, got {f.M}")
    if np.any(f.degenerate()):
        raise DegenerateBand("bands touch on the sampled zone")
    mu0 = solve_mu(grid, f.E, beta, rho0)
    me = matrix_elements(f)
    dhat = two_band_weights(f, me)
    derivs = fermi_dirac_derivs(beta, mu0, f.E, 2)
    pref = charge**2 / (grid.area * beta)
    peierls = np.zeros(len(f.E))
    inter = np.zeros(len(f.E), complex)
    for j in (0, 1):
        _, hess = band_derivatives(f, j)
        curv = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2
        peierls += derivs[2][:, j] * curv
        inter += derivs[2][:, j] * peierls_integrand_I(me, f.E, j)
        inter += derivs[0][:, j] * dhat[:, j, 0] + derivs[1][:, j] * dhat[:, j, 1]
    chi_P = float(-pref / 48 * grid.integrate(peierls))
    chi_Ib_c = -pref / 8 * grid.integrate(inter)
    chi_Ib = float(chi_Ib_c.real)
    return ChiResult(
        chi_P + chi_Ib,
        beta,
        rho0,
        mu0,
        "split",
        0.0,
        chi_P=chi_P,
        chi_Ib=chi_Ib,
        imag_residual=float(abs(chi_Ib_c.imag)),
        n_k=len(grid),
    )
