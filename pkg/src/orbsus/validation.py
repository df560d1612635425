"""Numerical checks of the library against independent oracles.

Every check is a function of a seeded generator that returns a
:class:`Check`.  ``ACCEPTANCE`` holds the headline criteria, ``INVARIANTS``
the per-module properties; :func:`run_checks` runs a selection of them.
"""

from __future__ import annotations

import fnmatch
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bloch import DD_INDEX, band_derivatives, fiber, model_matrices, resolvent
from .finite_lattice import (
    build_harper,
    extrapolate_pressure,
    identity_residual,
    kernel_db,
    kernel_decay_rate,
    kernel_fd,
    pressure_study,
    schur_bound,
    spectrum_bound,
    ttilde_norm,
)
from .lattice import Zone, build_model, default_grid, reciprocal
from .models import change_of_basis_demo, dirac_diagonal, dirac_gapped, honeycomb, p5_matrix
from .residue import (
    chi_residue,
    chi_zero_temperature,
    coefficient_tensors,
    matrix_elements,
    peierls_split,
    precompute_weights,
    residue_weights,
    two_band_u_v,
    two_band_weights,
)
from .thermo import (
    ThermoState,
    chi_contour,
    density_bulk,
    fermi_ln,
    make_contour,
    pressure_bulk,
)


@dataclass
class Check:
    key: str
    title: str
    passed: bool
    value: float
    limit: float
    detail: str = ""
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.key:<4} {self.title}: {self.value:.3e} (limit {self.limit:.1e}) {self.detail}".rstrip()


def _finite(*values) -> bool:
    return all(np.all(np.isfinite(np.asarray(v, dtype=complex))) for v in values)


def _rel(a, b) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def two_band_builtins():
    """Two-band built-in models with a gap, as used by the headline checks."""
    return {
        "dirac-l": dirac_gapped(1.0),
        "dirac-d": dirac_diagonal(1.0),
        "honeycomb": honeycomb(onsite_gap=0.6),
    }


def _random_k(model, n: int, rng) -> np.ndarray:
    """Uniform random k-points over the zone of ``model``."""
    if hasattr(model, "zone"):
        z = model.zone
        if z.shape == "disk":
            r = z.K * np.sqrt(rng.random(n))
            th = 2 * np.pi * rng.random(n)
            return np.stack([r * np.cos(th), r * np.sin(th)], 1)
        return z.K * (2 * rng.random((n, 2)) - 1)
    rc = reciprocal(model, 2)
    u = rng.random((n, 2))
    return u[:, :1] * rc.b1 + u[:, 1:] * rc.b2


# --------------------------------------------------------------------------
# acceptance criteria


def path_equivalence(rng=None, betas=(1.0, 5.0, 10.0), n: int = 64) -> Check:
    worst, rows = 0.0, []
    for name, m in two_band_builtins().items():
        grid = default_grid(m, n)
        for beta in betas:
            c = chi_contour(m, grid, beta, 0.5)
            r = chi_residue(m, grid, beta, 0.5)
            err = _rel(r.chi, c.chi)
            rows.append((name, beta, c.chi, r.chi, err))
            worst = max(worst, err)
            if not _finite(c.chi, r.chi):
                worst = math.inf
    return Check("C1", "contour vs residue susceptibility", worst <= 1e-7, worst, 1e-7, data={"rows": rows})


def _weights_vs_closed_form(model, k) -> float:
    f = fiber(model, k)
    ok = ~f.degenerate()
    f = f[ok]
    me = matrix_elements(f)
    d = residue_weights(f, me=me).d
    dh = two_band_weights(f, me)
    return float(np.max(np.abs(d - dh) / (1 + np.abs(dh))))


def two_band_oracle(rng, n: int = 10_000) -> Check:
    worst = max(_weights_vs_closed_form(m, _random_k(m, n, rng)) for m in two_band_builtins().values())
    return Check("C2", "engine weights vs two-band closed forms", worst <= 1e-10, worst, 1e-10, f"{n} k per model")


def dirac_zero_t_closed_form(delta: float, K: float) -> float:
    """Zero-temperature susceptibility of the gapped Dirac fiber on a disk of radius ``K``, half filling."""
    EK = math.sqrt(delta**2 + K**2)
    return -(4 / (3 * delta) - 1 / EK - delta**2 / (3 * EK**3)) / (16 * K**2)


def dirac_sweep(deltas, n: int = 64, K: float = 5.0, model=dirac_gapped) -> np.ndarray:
    return np.array([chi_zero_temperature(model(d, Zone("disk", K)), n, 0.5).chi for d in deltas])


def calculation_one(rng, n_k: int = 1000) -> Check:
    m = dirac_gapped(1.0)
    k = _random_k(m, n_k, rng)
    w = residue_weights(fiber(m, k)).d
    e2 = 1.0 + np.sum(k**2, axis=1)
    printed = e2**-1.5 + e2**-2.5
    # the engine books (i/2pi) oint f Tr = -sum d^l f d, which is -1/4 of the printed weight
    err_w11 = float(np.max(np.abs(-4 * w[:, 0, 1] - printed) / printed))
    err_w10 = float(np.max(np.abs(w[:, 0, 0])))
    errs_q = []
    for delta in (1.0, 0.1, 0.01):
        chi = chi_zero_temperature(dirac_gapped(delta), 64, 0.5).chi
        errs_q.append(_rel(chi, dirac_zero_t_closed_form(delta, 5.0)))
    deltas = np.logspace(-3, -1, 9)
    chis = dirac_sweep(deltas)
    slope = float(np.polyfit(np.log(deltas), np.log(np.abs(chis)), 1)[0])
    ok = err_w11 <= 1e-10 and err_w10 <= 1e-10 and max(errs_q) <= 1e-8 and abs(slope + 1) <= 0.02
    worst = max(err_w11, err_w10, max(errs_q))
    detail = f"d11 {err_w11:.1e}, d10 {err_w10:.1e}, closed form {max(errs_q):.1e}, slope {slope:.4f}"
    return Check("C3", "gapped Dirac weights, zero-T value and 1/delta law", ok, worst, 1e-8, detail,
                 data={"slope": slope, "deltas": deltas, "chis": chis, "quad_errs": errs_q})


def calculation_two(rng, n_xi: int = 200) -> Check:
    vals = [abs(chi_zero_temperature(dirac_diagonal(d), 64, 0.5).chi) for d in (0.01, 0.1, 1.0)]
    m = dirac_diagonal(1.0)
    k = _random_k(m, n_xi, rng)
    xi = rng.normal(size=n_xi) + 1j * (0.1 + rng.random(n_xi))
    H, dH, _ = m.matrices(k)
    tr = [abs(np.trace(p5_matrix(H[i], dH[i], xi[i]))) for i in range(n_xi)]
    ok = max(vals) <= 1e-9 and max(tr) <= 1e-14
    return Check("C4", "diagonal Dirac zero-T susceptibility and Tr P5", ok, max(vals), 1e-9,
                 f"max |Tr P5| {max(tr):.1e}")


def change_of_basis(rng, n: int = 100) -> Check:
    resid, tr_d, w5 = 0.0, 0.0, 0.0
    for _ in range(n):
        k = rng.uniform(-3, 3, 2)
        xi = complex(rng.normal(), rng.choice([-1, 1]) * (0.1 + rng.random()))
        rep = change_of_basis_demo(1.0, k, xi)
        resid = max(resid, rep.conjugation_residual)
        tr_d = max(tr_d, abs(rep.trace_p5_diag_conjugated))
        w5 = max(w5, rep.w5_rel_err)
    ok = resid <= 1e-12 and tr_d <= 1e-12 and w5 <= 1e-10
    return Check("C5", "change of basis between Dirac fibers", ok, w5, 1e-10,
                 f"conjugation {resid:.1e}, Tr P P5d P^-1 {tr_d:.1e}")


def peierls_split_check(rng=None, beta: float = 5.0, n_dirac: int = 64, n_lattice: int = 128, zones=None) -> Check:
    """Split identity on every gapped two-band built-in.

    Dirac models use their default disk zone unless ``zones`` overrides it;
    the honeycomb uses an ``n_lattice`` periodic grid.
    """
    worst, rows = 0.0, []
    zones = zones or {}
    for name, m in two_band_builtins().items():
        if name in zones:
            m = type(m)(m.name, m.M, m.builder, zones[name], m.params)
        grid = default_grid(m, n_lattice if name == "honeycomb" else n_dirac)
        full = chi_residue(m, grid, beta, 0.5).chi
        s = peierls_split(m, grid, beta, 0.5)
        err = _rel(s.chi, full)
        rows.append((name, full, s.chi_P, s.chi_Ib, err))
        worst = max(worst, err)
    detail = ", ".join(f"{r[0]} {r[4]:.1e}" for r in rows)
    return Check("C6", "Peierls plus interband equals total", worst <= 1e-9, worst, 1e-9, detail, data={"rows": rows})


def hellmann_feynman(rng, n: int = 1000, h: float = 1e-4) -> Check:
    worst_g, worst_h = 0.0, 0.0
    for m in two_band_builtins().values():
        k = _random_k(m, n, rng)
        f = fiber(m, k)
        steps = [np.array([h, 0.0]), np.array([0.0, h])]
        Ep = [fiber(m, k + s).E for s in steps]
        Em = [fiber(m, k - s).E for s in steps]
        Epp = fiber(m, k + steps[0] + steps[1]).E
        Epm = fiber(m, k + steps[0] - steps[1]).E
        Emp = fiber(m, k - steps[0] + steps[1]).E
        Emm = fiber(m, k - steps[0] - steps[1]).E
        for j in range(f.M):
            g, H = band_derivatives(f, j)
            g_fd = np.stack([(Ep[a][:, j] - Em[a][:, j]) / (2 * h) for a in range(2)], 1)
            h11 = (Ep[0][:, j] - 2 * f.E[:, j] + Em[0][:, j]) / h**2
            h22 = (Ep[1][:, j] - 2 * f.E[:, j] + Em[1][:, j]) / h**2
            h12 = (Epp[:, j] - Epm[:, j] - Emp[:, j] + Emm[:, j]) / (4 * h**2)
            H_fd = np.stack([np.stack([h11, h12], 1), np.stack([h12, h22], 1)], 1)
            eg = np.linalg.norm(g - g_fd, axis=1) / np.maximum(np.linalg.norm(g_fd, axis=1), 1e-3)
            eh = np.linalg.norm(H - H_fd, axis=(1, 2)) / np.maximum(np.linalg.norm(H_fd, axis=(1, 2)), 1e-3)
            worst_g = max(worst_g, float(eg.max()))
            worst_h = max(worst_h, float(eh.max()))
    ok = worst_g <= 1e-6 and worst_h <= 1e-5
    return Check("C7", "band gradient and Hessian vs finite differences", ok, worst_h, 1e-5,
                 f"gradient {worst_g:.1e}")


def gauge_kernels(rng=None, N: int = 8, xi: complex = 0.3 + 0.5j) -> Check:
    """Kernel derivatives at interior diagonal sites, operator identity, and linear scaling of T~.

    Errors are measured against ``max(|FD|, |R(x,x)|)``; at ``b0 = 0`` the
    first derivative of a diagonal kernel is zero and only the scale of the
    resolvent gives the comparison a meaning.
    """
    m = honeycomb()
    e1, e2 = 0.0, 0.0
    for b0 in (0.0, 0.3):
        op = build_harper(m, N, b0)
        lat = op.lattice
        R = op.resolvent(xi)
        for cell, s in (((0, 0), 0), ((1, 2), 0), ((-2, 1), 1)):
            x = lat.ordinal(cell, s)
            scale = abs(R[x, x])
            for order in (1, 2):
                an = kernel_db(op, x, x, xi, order)
                fd = kernel_fd(m, N, b0, x, x, xi, order)
                err = abs(an - fd) / max(abs(fd), scale)
                if order == 1:
                    e1 = max(e1, err)
                else:
                    e2 = max(e2, err)
    ident = max(identity_residual(m, N, b0, db, xi) for b0 in (0.0, 0.3) for db in (1e-3, 1e-2))
    op = build_harper(m, N, 0.3)
    n1, n2 = ttilde_norm(op, 2e-3, xi), ttilde_norm(op, 1e-3, xi)
    ratio_err = abs(n1 / n2 - 2) / 2
    ok = e1 <= 1e-6 and e2 <= 1e-5 and ident <= 1e-10 and ratio_err <= 0.05
    return Check("C8", "gauge-invariant kernel derivatives", ok, e2, 1e-5,
                 f"first {e1:.1e}, identity {ident:.1e}, T~ ratio {n1 / n2:.4f}")


def thermodynamic_limit(rng=None, Ns=(4, 6, 8, 10, 12), beta: float = 2.0, z: float = 1.0) -> Check:
    st = pressure_study(honeycomb(), Ns, beta, z)
    errs = st.errors
    ok = st.strictly_decreasing() and errs[-1] < 1e-3
    extrap = extrapolate_pressure(st.N[1:], st.P_N[1:])
    detail = "errors " + " ".join(f"{e:.2e}" for e in errs) + f"; edge-fit limit off by {abs(extrap - st.P_bulk):.1e}"
    return Check("C9", "finite-lattice pressure approaches the bulk", ok, float(errs[-1]), 1e-3, detail,
                 data={"study": st, "extrapolated": extrap})


def zero_t_limit(rng=None, betas=(10.0, 20.0, 40.0), gap: float = 0.6, n: int = 64) -> Check:
    m = honeycomb(onsite_gap=gap)
    grid = default_grid(m, n)
    inf = chi_zero_temperature(m, grid, 0.5).chi
    worst, excess = 0.0, -math.inf
    for beta in betas:
        diff = abs(chi_residue(m, grid, beta, 0.5).chi - inf)
        bound = math.exp(-beta * gap / 4) * abs(inf) + 1e-9
        excess = max(excess, diff / bound)
        worst = max(worst, diff)
    return Check("C10", "finite-temperature approach to the band-insulator limit", excess <= 1, excess, 1.0,
                 f"max |chi(beta) - chi(inf)| {worst:.1e}")


# --------------------------------------------------------------------------
# module invariants


def inv_duality(rng) -> Check:
    worst = 0.0
    for _ in range(20):
        a1, a2 = rng.normal(size=2), rng.normal(size=2)
        if abs(a1[0] * a2[1] - a1[1] * a2[0]) < 0.1:
            continue
        raw = {"lattice": {"a1": a1.tolist(), "a2": a2.tolist()},
               "site": [{"position": [0, 0]}, {"position": (0.3 * a1).tolist()}],
               "hop": [{"i": 1, "j": 0, "cell": [0, 0], "t": 1.0}]}
        m = build_model(raw)
        worst = max(worst, reciprocal(m, 4).duality_residual(m))
    return Check("L1", "dual lattice duality residual", worst <= 1e-12, worst, 1e-12)


def inv_trapezoid(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    vals = []
    for n in (64, 128):
        g = reciprocal(m, n).grid
        vals.append(g.integrate(fiber(m, g.points).E[:, 1]))
    err = abs(vals[1] - vals[0])
    return Check("L2", "periodic trapezoid converged under doubling", err <= 1e-10, err, 1e-10)


def inv_closure(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    again = build_model(m.to_raw())
    ok = again == m and again.fingerprint() == m.fingerprint()
    return Check("L3", "Hermitian closure is idempotent", ok, 0.0 if ok else 1.0, 0.0)


def _resolvent_at(model, k, xi):
    return resolvent(fiber(model, k), xi)


def inv_resolvent_derivatives(rng, n: int = 20) -> Check:
    e1, e2 = 0.0, 0.0
    h1, h2 = 1e-5, 1e-4
    for m in (*two_band_builtins().values(), honeycomb()):
        for k in _random_k(m, n, rng):
            xi = complex(rng.normal(), 0.5 + rng.random())
            H, dH, ddH = model_matrices(m, k)
            R = _resolvent_at(m, k, xi)
            for a in range(2):
                ea = np.eye(2)[a]
                fd = (_resolvent_at(m, k + h1 * ea, xi) - _resolvent_at(m, k - h1 * ea, xi)) / (2 * h1)
                e1 = max(e1, float(np.linalg.norm(fd + R @ dH[0, a] @ R, 2)))
                for g in range(2):
                    eg = np.eye(2)[g]
                    fd2 = (
                        _resolvent_at(m, k + h2 * (ea + eg), xi)
                        - _resolvent_at(m, k + h2 * (ea - eg), xi)
                        - _resolvent_at(m, k - h2 * (ea - eg), xi)
                        + _resolvent_at(m, k - h2 * (ea + eg), xi)
                    ) / (4 * h2**2)
                    A, G = dH[0, a], dH[0, g]
                    exact = R @ G @ R @ A @ R - R @ ddH[0, DD_INDEX[a, g]] @ R + R @ A @ R @ G @ R
                    e2 = max(e2, float(np.linalg.norm(fd2 - exact, 2)))
    ok = e1 <= 1e-6 and e2 <= 1e-4
    return Check("B1", "resolvent k-derivative identities", ok, e1, 1e-6, f"second {e2:.1e}")


def inv_band_continuity(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    rc = reciprocal(m, 2)
    t = np.linspace(0, 1, 2001)[:, None]
    path = t * (rc.b1 + 0.5 * rc.b2)
    E = fiber(m, path).E
    step = float(np.max(np.abs(np.diff(E, axis=0))))
    # |dE/dk| <= ||dH|| <= sum |t| |d|; with |d| = a for nearest neighbours
    lip = 3.0 * float(np.linalg.norm(path[1] - path[0]))
    return Check("B2", "band energies continuous along a path", step <= lip, step, lip)


def inv_pressure_density(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    grid = default_grid(m, 32)
    worst_p = math.inf
    for _ in range(10):
        beta, z = 10 ** rng.uniform(-1, 1.5), 10 ** rng.uniform(-3, 3)
        worst_p = min(worst_p, pressure_bulk(m, grid, ThermoState.from_fugacity(beta, z)))
    mus = np.sort(rng.uniform(-4, 4, 30))
    rho = np.array([density_bulk(m, grid, 3.0, mu) for mu in mus])
    mono = bool(np.all(np.diff(rho) > 0))
    ok = worst_p > 0 and mono
    return Check("T1", "pressure positive and density increasing in mu", ok, worst_p, 0.0,
                 "monotone" if mono else "density not monotone")


def inv_contour_margin(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    a = chi_contour(m, 32, 5.0, 0.5, tol=1e-13, max_level=6).chi
    b = chi_contour(m, 32, 5.0, 0.5, tol=1e-13, max_level=6, margin=2.0).chi
    err = _rel(b, a)
    return Check("T2", "contour result unchanged when the right edge moves out", err <= 1e-10, err, 1e-10)


def inv_cauchy(rng) -> Check:
    beta, mu = 4.0, 0.3
    spec = make_contour(beta, -2.0, 2.0, level=1)
    worst = 0.0
    for E in rng.uniform(-2, 2, 20):
        val = 1j / (2 * np.pi) * np.sum(spec.weights * fermi_ln(beta, mu, spec.nodes) / (E - spec.nodes))
        exact = float(np.logaddexp(0.0, beta * (mu - E)))
        worst = max(worst, abs(val - exact))
    return Check("T3", "Cauchy integral of the log-Fermi weight", worst <= 1e-10, worst, 1e-10)


def inv_real_chi(rng) -> Check:
    worst = 0.0
    for m in two_band_builtins().values():
        r = chi_contour(m, 32, 5.0, 0.5)
        worst = max(worst, r.imag_residual / abs(r.chi))
    return Check("T4", "susceptibility real after integration", worst <= 1e-10, worst, 1e-10)


def inv_beta_independence(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    grid = default_grid(m, 32)
    from .thermo import grid_fibers

    w = precompute_weights(grid_fibers(m, grid))
    worst = 0.0
    for beta in (2.0, 7.0):
        reused = chi_residue(m, grid, beta, 0.5, weights=w).chi
        worst = max(worst, _rel(reused, chi_contour(m, grid, beta, 0.5).chi))
    return Check("R1", "one weight table serves every temperature", worst <= 1e-7, worst, 1e-7)


def inv_phase_invariance(rng, n: int = 200) -> Check:
    m = honeycomb(onsite_gap=0.6)
    f = fiber(m, _random_k(m, n, rng))
    ref = coefficient_tensors(matrix_elements(f))
    phases = np.exp(2j * np.pi * rng.random((n, 1, f.M)))
    g = type(f)(f.k, f.H, f.dH, f.ddH, f.E, f.U * phases)
    new = coefficient_tensors(matrix_elements(g))
    worst = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, new))
    return Check("R2", "coefficients unchanged by eigenvector phases", worst <= 1e-12, worst, 1e-12)


def inv_two_band_uv(rng, n: int = 500) -> Check:
    worst, v0 = 0.0, 0.0
    for m in two_band_builtins().values():
        f = fiber(m, _random_k(m, n, rng))
        me = matrix_elements(f)
        d = residue_weights(f, me=me).d
        u, v = two_band_u_v(me, 0)
        dE = f.E[:, 1] - f.E[:, 0]
        d11 = sum(u[i] / dE ** (i + 1) for i in range(3))
        d10 = sum(v[i] / dE ** (i + 2) for i in range(3))
        scale = 1 + np.abs(d[:, 0, 1]) + np.abs(d[:, 0, 0])
        worst = max(worst, float(np.max((np.abs(d11 - d[:, 0, 1]) + np.abs(d10 - d[:, 0, 0])) / scale)))
        v0 = max(v0, float(np.max(np.abs(v[0]))))
    ok = worst <= 1e-10 and v0 == 0.0
    return Check("R3", "two-band u/v identities", ok, worst, 1e-10, f"max |v_0| {v0:.1e}")


def inv_spectrum_bound(rng) -> Check:
    m = honeycomb()
    norms = spectrum_bound(m, 5, np.linspace(0, 2 * np.pi, 9))
    bound = schur_bound(m)
    return Check("F1", "magnetic operator norm bounded uniformly in b", norms.max() <= bound, float(norms.max()), bound)


def inv_kernel_decay(rng) -> Check:
    m = honeycomb(onsite_gap=0.6)
    slope = kernel_decay_rate(build_harper(m, 8, 0.3), 0.0 + 0.5j)
    return Check("F2", "resolvent kernel decays away from the diagonal", slope < 0, slope, 0.0)


def inv_magnetic_operator(rng) -> Check:
    m = honeycomb()
    op = build_harper(m, 3, 0.7)
    herm = float(np.max(np.abs(op.Hmat - op.Hmat.conj().T)))
    cov = max(op.covariance_residual(s) for s in ((1, 0), (0, 1), (-1, 1)))
    same = bool(np.array_equal(op.Hmat != 0, build_harper(m, 3, 0.0).Hmat != 0))
    ok = herm <= 1e-14 and cov <= 1e-14 and same
    return Check("F3", "magnetic operator Hermitian, covariant, same sparsity", ok, max(herm, cov), 1e-14)


def inv_pressure_convergence(rng) -> Check:
    st = pressure_study(honeycomb(), (4, 6, 8, 10, 12), 2.0, 1.0)
    steps = np.abs(np.diff(st.P_N))
    ok = bool(np.all(np.diff(steps) < 0))
    return Check("F4", "successive finite-lattice pressure changes shrink", ok, float(steps[-1]), float(steps[0]))


def inv_models(rng, n: int = 200, h: float = 1e-6) -> Check:
    worst_d, worst_h = 0.0, 0.0
    for m in two_band_builtins().values():
        if not hasattr(m, "builder"):
            continue
        k = _random_k(m, n, rng)
        H, dH, ddH = m.matrices(k)
        worst_h = max(worst_h, float(np.max(np.abs(H - np.conj(np.swapaxes(H, 1, 2))))))
        for a in range(2):
            e = np.eye(2)[a] * h
            Hp, dHp, _ = m.matrices(k + e)
            Hm, dHm, _ = m.matrices(k - e)
            fd = (Hp - Hm) / (2 * h)
            worst_d = max(worst_d, float(np.max(np.abs(fd - dH[:, a]) / (1 + np.abs(dH[:, a])))))
            for g in range(2):
                fd2 = (dHp[:, g] - dHm[:, g]) / (2 * h)
                ref = ddH[:, DD_INDEX[a, g]]
                worst_d = max(worst_d, float(np.max(np.abs(fd2 - ref) / (1 + np.abs(ref)))))
    ok = worst_d <= 1e-6 and worst_h == 0.0
    return Check("M1", "analytic fiber derivatives match finite differences", ok, worst_d, 1e-6)


def inv_dirac_sweeps(rng) -> Check:
    deltas = np.logspace(-3, -1, 9)
    chis = dirac_sweep(deltas)
    A, B = np.polyfit(1 / deltas, chis, 1)
    zero = float(np.max(np.abs(dirac_sweep(deltas, model=dirac_diagonal))))
    m = dirac_gapped(0.01)
    d10 = float(np.max(np.abs(residue_weights(fiber(m, _random_k(m, 500, rng))).d[:, 0, 0])))
    ok = A < 0 and zero <= 1e-9 and d10 <= 1e-10
    return Check("M2", "Dirac sweeps: 1/delta law, diagonal fiber zero, d_10 zero", ok, zero, 1e-9,
                 f"A {A:.4e}, max |d_10| {d10:.1e}")


def inv_determinism(rng) -> Check:
    from .cli import chi_rows, csv_text

    args = dict(model="honeycomb", params={"onsite_gap": 0.6}, method="residue", beta=[3.0], rho0=[0.5], grid=16)
    a = csv_text(*chi_rows(**args))
    b = csv_text(*chi_rows(**args))
    return Check("D1", "identical configuration gives identical CSV", a == b, 0.0 if a == b else 1.0, 0.0)


ACCEPTANCE: dict[str, Callable] = {
    "C1": path_equivalence,
    "C2": two_band_oracle,
    "C3": calculation_one,
    "C4": calculation_two,
    "C5": change_of_basis,
    "C6": peierls_split_check,
    "C7": hellmann_feynman,
    "C8": gauge_kernels,
    "C9": thermodynamic_limit,
    "C10": zero_t_limit,
}

INVARIANTS: dict[str, Callable] = {
    "L1": inv_duality,
    "L2": inv_trapezoid,
    "L3": inv_closure,
    "B1": inv_resolvent_derivatives,
    "B2": inv_band_continuity,
    "T1": inv_pressure_density,
    "T2": inv_contour_margin,
    "T3": inv_cauchy,
    "T4": inv_real_chi,
    "R1": inv_beta_independence,
    "R2": inv_phase_invariance,
    "R3": inv_two_band_uv,
    "F1": inv_spectrum_bound,
    "F2": inv_kernel_decay,
    "F3": inv_magnetic_operator,
    "F4": inv_pressure_convergence,
    "M1": inv_models,
    "M2": inv_dirac_sweeps,
    "D1": inv_determinism,
}


def run_one(key: str, seed: int = 0) -> Check:
    """Run a single check with a generator derived from ``seed`` and the key."""
    fn = ACCEPTANCE.get(key) or INVARIANTS.get(key)
    if fn is None:
        raise KeyError(key)
    rng = np.random.default_rng([seed, *key.encode()])
    t0 = time.perf_counter()
    try:
        chk = fn(rng)
    except Exception as exc:  # a crashing check is a failed check
        chk = Check(key, fn.__name__, False, math.nan, math.nan, f"raised {type(exc).__name__}: {exc}")
    chk.seconds = time.perf_counter() - t0
    if chk.passed and not math.isfinite(chk.value):
        chk.passed = False
        chk.detail += " (non-finite value)"
    return chk


def invariant_summary(results: list[Check]) -> Check:
    """Criterion 11: every invariant passed and no value was NaN or Inf."""
    failed = [c.key for c in results if not c.passed]
    return Check("C11", "all invariants pass, no NaN or Inf", not failed, float(len(failed)), 0.0,
                 ("failed: " + ", ".join(failed)) if failed else f"{len(results)} checks")


def run_checks(seed: int = 0, only: str | None = None, progress: Callable | None = None) -> list[Check]:
    """Run the acceptance criteria and the invariants.

    ``only`` is a glob over check keys (``C*``, ``F?``, ...); the summary
    criterion ``C11`` is reported whenever every invariant ran.
    """
    results = []
    inv = []
    for key in [*ACCEPTANCE, *INVARIANTS]:
        if only is not None and not fnmatch.fnmatch(key, only) and not fnmatch.fnmatch("C11", only):
            continue
        chk = run_one(key, seed)
        if key in INVARIANTS:
            inv.append(chk)
        if only is None or fnmatch.fnmatch(key, only):
            results.append(chk)
            if progress:
                progress(chk)
    if len(inv) == len(INVARIANTS):
        summary = invariant_summary(inv)
        results.append(summary)
        if progress:
            progress(summary)
    return results
