import numpy as np
import pytest
import sympy as sp

from orbsus.bloch import fiber
from orbsus.errors import BadArity, DegenerateFallback, NonIntegerFilling, NotSemiconducting, NotTwoBand
from orbsus.lattice import Zone, build_model, default_grid, reciprocal
from orbsus.models import dirac_diagonal, dirac_gapped, honeycomb
from orbsus.residue import (
    chi_residue,
    chi_zero_temperature,
    coeff_C,
    coefficient_tensors,
    matrix_elements,
    peierls_split,
    pole_residues,
    residue_weights,
    two_band_weights,
)
from orbsus.thermo import contour_values, fermi_dirac_derivs, make_contour


def three_band():
    raw = {
        "lattice": {"a1": [1.0, 0.0], "a2": [0.3, 1.1]},
        "site": [{"position": [0, 0]}, {"position": [0.5, 0.1]}, {"position": [0.2, 0.6]}],
        "hop": [
            {"i": 1, "j": 0, "cell": [0, 0], "t": [1.0, 0.2]},
            {"i": 2, "j": 0, "cell": [0, 0], "t": 0.7},
            {"i": 2, "j": 1, "cell": [0, 0], "t": [0.4, -0.3]},
            {"i": 0, "j": 1, "cell": [1, 0], "t": 0.5},
            {"i": 0, "j": 2, "cell": [0, 1], "t": 0.6},
            {"i": 0, "j": 0, "cell": [0, 0], "t": -1.0},
            {"i": 2, "j": 2, "cell": [0, 0], "t": 1.2},
        ],
    }
    return build_model(raw)


@pytest.mark.parametrize("poles", [((0, 2), (1, 1)), ((0, 2), (1, 1), (2, 1)), ((0, 3), (1, 1)), ((0, 4),), ((0, 2), (1, 2))])
def test_pole_rule_against_symbolic_residues(poles):
    xi, c = sp.symbols("xi c")
    E = [sp.Rational(-7, 5), sp.Rational(1, 3), sp.Rational(9, 4)]
    g = sp.exp(c * xi)
    for p, m in poles:
        g = g / (E[p] - xi) ** m
    # (i/2pi) * 2 pi i * sum Res = -sum Res for a counter-clockwise contour
    expect = -sum(sp.residue(g, xi, E[p]) for p, _ in poles)
    coefs = pole_residues(np.array([float(e) for e in E]), poles)
    got = 0
    for p, coef in coefs.items():
        got += sum(coef[l] * c**l * sp.exp(c * E[p]) for l in range(4))
    for cv in (0.3, -1.1):
        assert complex(got.subs(c, cv)) == pytest.approx(complex(expect.subs(c, cv).evalf()), rel=1e-12)


def test_tensors_match_scalar_coefficients(rng):
    f = fiber(three_band(), rng.uniform(-2, 2, 2))
    me = matrix_elements(f)
    C4, C3, C2 = coefficient_tensors(me)
    for idx in [(0, 1, 2, 1), (2, 2, 0, 1), (1, 0, 0, 2)]:
        assert C4[idx] == pytest.approx(coeff_C(me, idx), abs=1e-14)
    assert C3[2, 0, 1] == pytest.approx(coeff_C(me, (2, 0, 1)), abs=1e-14)
    assert C2[1, 2] == pytest.approx(coeff_C(me, (1, 2)), abs=1e-14)
    with pytest.raises(BadArity):
        coeff_C(me, (0,))


def test_three_band_weights_reproduce_contour(rng):
    m = three_band()
    f = fiber(m, rng.uniform(-3, 3, (10, 2)))
    beta, mu = 2.0, 0.2
    vals = contour_values(f, make_contour(beta, f.E.min(), f.E.max(), level=1), mu)
    d = residue_weights(f).d
    derivs = fermi_dirac_derivs(beta, mu, f.E, 3)
    np.testing.assert_allclose(-sum(derivs[l] * d[..., l] for l in range(4)).sum(-1), vals, rtol=1e-10, atol=1e-12)


def test_three_band_chi_paths_agree():
    from orbsus.thermo import chi_contour

    m = three_band()
    assert chi_residue(m, 24, 2.0, 1 / 3).chi == pytest.approx(chi_contour(m, 24, 2.0, 1 / 3).chi, rel=1e-8)


def test_closed_forms_near_dirac_points_agree_to_rounding(rng):
    # the weights grow like gap^-4; compare on the scale of the largest weight at each k
    m = honeycomb()
    rc = reciprocal(m, 2)
    corner = (2 * rc.b1 + rc.b2) / 3
    k = corner + 0.05 * rng.normal(size=(2000, 2))
    f = fiber(m, k)
    f = f[~f.degenerate()]
    me = matrix_elements(f)
    d = residue_weights(f, me=me).d
    dh = two_band_weights(f, me)
    scale = np.max(np.abs(dh), axis=(1, 2))
    assert np.max(np.max(np.abs(d - dh), axis=(1, 2)) / scale) < 1e-12


def test_weights_beta_independent_reuse():
    from orbsus.residue import precompute_weights
    from orbsus.thermo import grid_fibers

    m = honeycomb(onsite_gap=0.6)
    g = default_grid(m, 16)
    w = precompute_weights(grid_fibers(m, g))
    for beta in (1.0, 4.0):
        assert chi_residue(m, g, beta, 0.5, weights=w).chi == pytest.approx(chi_residue(m, g, beta, 0.5).chi, rel=1e-14)


def test_degenerate_handling():
    m = honeycomb()
    rc = reciprocal(m, 2)
    f = fiber(m, (2 * rc.b1 + rc.b2) / 3)
    with pytest.raises(DegenerateFallback):
        residue_weights(f)
    w = residue_weights(f, on_degenerate="merge")
    assert np.all(np.isfinite(w.d)) and w.merged[1]


def test_gapless_honeycomb_residue_uses_fallback():
    from orbsus.thermo import chi_contour

    m = honeycomb()
    r = chi_residue(m, 24, 2.0, 0.5)
    assert r.n_fallback > 0
    assert r.chi == pytest.approx(chi_contour(m, 24, 2.0, 0.5).chi, rel=1e-9)


def test_zero_temperature_errors():
    with pytest.raises(NotSemiconducting):
        chi_zero_temperature(honeycomb(), 24, 0.5)
    with pytest.raises(NonIntegerFilling):
        chi_zero_temperature(dirac_gapped(1.0), 16, 0.3)


def test_gapped_dirac_d10_vanishes(rng):
    f = fiber(dirac_gapped(0.3), rng.uniform(-4, 4, (200, 2)))
    assert np.max(np.abs(residue_weights(f).d[:, 0, 0])) < 1e-12


def test_split_needs_two_bands():
    with pytest.raises(NotTwoBand):
        peierls_split(three_band(), 8, 1.0, 1 / 3)


def test_split_exact_on_periodic_zone():
    m = honeycomb(onsite_gap=0.6)
    g = default_grid(m, 128)
    s = peierls_split(m, g, 5.0, 0.5)
    assert s.chi == pytest.approx(chi_residue(m, g, 5.0, 0.5).chi, rel=1e-9)
    assert s.chi_P + s.chi_Ib == pytest.approx(s.chi, rel=1e-15)


def test_split_residual_is_a_zone_edge_effect():
    # on a truncated disk the split misses a boundary term that dies with the Fermi tail at |k| = K
    m5, m8 = dirac_diagonal(1.0, Zone("disk", 5.0)), dirac_diagonal(1.0, Zone("disk", 8.0))
    err = []
    for m in (m5, m8):
        g = default_grid(m, 64)
        err.append(abs(peierls_split(m, g, 5.0, 0.5).chi / chi_residue(m, g, 5.0, 0.5).chi - 1))
    assert err[1] < 1e-12 < err[0]
