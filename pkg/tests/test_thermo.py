import math

import numpy as np
import pytest
import sympy as sp

from orbsus.bloch import fiber
from orbsus.errors import ConfigError, OutsideStrip, TargetOutOfRange
from orbsus.lattice import Zone, default_grid
from orbsus.models import dirac_gapped, flat_bands, honeycomb
from orbsus.residue import chi_residue, residue_weights
from orbsus.thermo import (
    ThermoState,
    chi_contour,
    contour_values,
    density_bulk,
    fermi_dirac_derivs,
    fermi_ln,
    invert_density,
    make_contour,
    pressure_bulk,
    trace_P,
    trace_terms_eigen,
)


def test_fermi_ln_no_overflow():
    assert fermi_ln(100.0, 0.0, -50.0 + 0j) == pytest.approx(5000.0)
    assert abs(fermi_ln(100.0, 0.0, 50.0 + 0j)) < 1e-300 + 1e-2170
    with pytest.raises(OutsideStrip):
        fermi_ln(1.0, 0.0, 4j)


def test_fermi_derivatives_symbolic():
    x, b, mu = sp.symbols("x b mu", real=True)
    expr = sp.log(1 + sp.exp(b * (mu - x)))
    vals = fermi_dirac_derivs(2.5, 0.3, np.array([-1.0, 0.1, 0.9]), 3)
    for l in range(4):
        f = sp.lambdify(x, sp.diff(expr, x, l).subs({b: 2.5, mu: 0.3}))
        np.testing.assert_allclose(vals[l], [float(f(v)) for v in (-1.0, 0.1, 0.9)], rtol=1e-12)


def test_flat_band_pressure_closed_form():
    levels = [-0.5, 0.7]
    m = flat_bands(levels, Zone("disk", 1.0))
    for beta, z in [(1.0, 1.0), (3.0, 0.01), (0.5, 50.0)]:
        P = pressure_bulk(m, 8, ThermoState.from_fugacity(beta, z))
        expect = sum(math.log1p(z * math.exp(-beta * e)) for e in levels) / (beta * 2)
        assert P == pytest.approx(expect, rel=1e-13)


def test_pressure_linear_in_small_fugacity():
    m = honeycomb(onsite_gap=0.6)
    p1 = pressure_bulk(m, 16, ThermoState.from_fugacity(2.0, 1e-13))
    p2 = pressure_bulk(m, 16, ThermoState.from_fugacity(2.0, 2e-13))
    assert p2 / p1 == pytest.approx(2.0, rel=1e-7)


def test_half_filling_of_symmetric_spectrum():
    m = honeycomb(onsite_gap=0.6)
    mu = invert_density(m, 32, 4.0, 0.5)
    assert abs(mu) < 1e-12
    assert density_bulk(m, 32, 4.0, mu) == pytest.approx(0.5, abs=1e-14)


def test_density_inversion_round_trip():
    m = dirac_gapped(1.0)
    mu = invert_density(m, 32, 2.0, 0.3)
    assert density_bulk(m, 32, 2.0, mu) == pytest.approx(0.3, abs=1e-13)


@pytest.mark.parametrize("rho0", [0.0, 1.0, -0.1])
def test_density_out_of_range(rho0):
    with pytest.raises(TargetOutOfRange):
        invert_density(honeycomb(), 8, 1.0, rho0)


def test_eigenbasis_traces_match_dense_site_basis(rng):
    for m in (honeycomb(onsite_gap=0.6), dirac_gapped(0.8)):
        k = rng.uniform(-2, 2, (5, 2))
        f = fiber(m, k)
        xi = np.array([0.3 + 0.4j, -1.2 - 0.2j, 2.0 + 1e-3j])
        table = trace_terms_eigen(f.pi(), f.sigma(), f.E, xi)
        for i in range(len(k)):
            for n, x in enumerate(xi):
                assert table[i, n] == pytest.approx(trace_P(f[i], x), rel=1e-11, abs=1e-13)


def test_contour_equals_residue_pointwise(rng):
    m = honeycomb(onsite_gap=0.6)
    f = fiber(m, rng.uniform(-2, 2, (8, 2)))
    beta, mu = 3.0, 0.1
    spec = make_contour(beta, f.E.min(), f.E.max(), level=1)
    vals = contour_values(f, spec, mu)
    d = residue_weights(f).d
    derivs = fermi_dirac_derivs(beta, mu, f.E, 3)
    res = -sum(derivs[l] * d[..., l] for l in range(4)).sum(-1)
    np.testing.assert_allclose(vals, res, rtol=1e-10, atol=1e-12)


def test_contour_geometry():
    spec = make_contour(2.0, -1.0, 1.0)
    assert spec.halfheight == pytest.approx(math.pi / 4)
    assert spec.contains(np.array([-1.0, 1.0]))
    # counter-clockwise: the contour integral of 1/(xi - 0) is 2 pi i
    assert np.sum(spec.weights / spec.nodes) == pytest.approx(2j * math.pi, rel=1e-13)
    with pytest.raises(ConfigError):
        make_contour(0.0, -1.0, 1.0)


def test_chi_contour_matches_residue_small_grid():
    m = honeycomb(onsite_gap=0.6)
    c = chi_contour(m, 16, 2.0, 0.5)
    r = chi_residue(m, 16, 2.0, 0.5)
    assert r.chi == pytest.approx(c.chi, rel=1e-9)
    assert c.imag_residual <= 1e-10 * abs(c.chi)


def test_chi_scales_with_charge_squared():
    m = honeycomb(onsite_gap=0.6)
    a = chi_residue(m, 16, 2.0, 0.5).chi
    b = chi_residue(m, 16, 2.0, 0.5, charge=3.0).chi
    assert b == pytest.approx(9 * a, rel=1e-13)


def test_flat_bands_have_no_orbital_response():
    m = flat_bands([-1.0, 1.0], Zone("disk", 1.0))
    assert chi_contour(m, 8, 1.0, 0.5).chi == 0.0


def test_chi_diamagnetic_for_gapped_dirac():
    assert chi_residue(dirac_gapped(1.0), default_grid(dirac_gapped(1.0), 32), 5.0, 0.5).chi < 0
