import numpy as np
import pytest

from orbsus.bloch import band_derivatives, fiber, fix_phases, resolvent
from orbsus.errors import DegenerateBand, OnSpectrum
from orbsus.lattice import reciprocal
from orbsus.models import dirac_gapped, honeycomb


def wallace(k, t=1.0):
    """Off-diagonal element sum_d t exp(-i k.d) over the three bond vectors from site 0 to site 1."""
    ds = np.array([[1.0, 0.0], [-0.5, np.sqrt(3) / 2], [-0.5, -np.sqrt(3) / 2]])
    return t * np.exp(-1j * k @ ds.T).sum(-1)


def test_honeycomb_matches_wallace_dispersion(rng):
    m = honeycomb()
    k = rng.uniform(-4, 4, (50, 2))
    f = fiber(m, k)
    g = wallace(k)
    np.testing.assert_allclose(f.E[:, 1], np.abs(g), atol=1e-13)
    np.testing.assert_allclose(f.E[:, 0], -np.abs(g), atol=1e-13)


def test_first_and_second_derivatives_by_finite_difference(rng):
    m = honeycomb(onsite_gap=0.4)
    k = rng.uniform(-3, 3, 2)
    h = 1e-6
    f = fiber(m, k)
    for a in range(2):
        e = np.eye(2)[a] * h
        fd = (fiber(m, k + e).H - fiber(m, k - e).H) / (2 * h)
        np.testing.assert_allclose(f.dH[a], fd, atol=1e-8)
    fd12 = (fiber(m, k + [0, h]).dH[0] - fiber(m, k - [0, h]).dH[0]) / (2 * h)
    np.testing.assert_allclose(f.ddH[1], fd12, atol=1e-7)


def test_hermitian_and_sorted(rng):
    f = fiber(honeycomb(onsite_gap=0.6), rng.uniform(-3, 3, (20, 2)))
    np.testing.assert_allclose(f.H, np.conj(np.swapaxes(f.H, 1, 2)), atol=0)
    assert np.all(np.diff(f.E, axis=1) >= 0)


def test_phase_fixing_makes_pivot_real_positive(rng):
    U = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    V = fix_phases(U)
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(3)]
    assert np.all(np.abs(piv.imag) < 1e-15) and np.all(piv.real > 0)


def test_resolvent_against_inverse(rng):
    m = honeycomb(onsite_gap=0.6)
    f = fiber(m, rng.uniform(-3, 3, 2))
    xi = 0.2 + 0.7j
    np.testing.assert_allclose(resolvent(f, xi), np.linalg.inv(f.H - xi * np.eye(2)), atol=1e-14)


def test_resolvent_on_spectrum():
    f = fiber(dirac_gapped(1.0), np.array([0.0, 0.0]))
    with pytest.raises(OnSpectrum):
        resolvent(f, -1.0)


def test_dirac_band_derivatives_closed_form(rng):
    m = dirac_gapped(0.7)
    k = rng.uniform(-2, 2, (30, 2))
    f = fiber(m, k)
    e = np.sqrt(0.49 + np.sum(k**2, axis=1))
    grad, hess = band_derivatives(f, 1)
    np.testing.assert_allclose(grad, k / e[:, None], atol=1e-13)
    expect = np.eye(2)[None] / e[:, None, None] - k[:, :, None] * k[:, None, :] / e[:, None, None] ** 3
    np.testing.assert_allclose(hess, expect, atol=1e-12)


def test_degenerate_band_raises_at_dirac_point():
    m = honeycomb()
    rc = reciprocal(m, 2)
    corner = (2 * rc.b1 + rc.b2) / 3
    f = fiber(m, corner)
    assert f.degenerate()
    with pytest.raises(DegenerateBand):
        band_derivatives(f, 0)
