import math

import numpy as np
import pytest

from orbsus.bloch import fiber, resolvent
from orbsus.errors import ConfigError, NonPositiveGap, SingularBasis
from orbsus.lattice import reciprocal
from orbsus.models import (
    basis_change,
    change_of_basis_demo,
    dirac_diagonal,
    dirac_gapped,
    get_model,
    honeycomb,
    p5_gapped_trace,
    p5_matrix,
)


def test_dirac_eigenvalues(rng):
    k = rng.uniform(-3, 3, (20, 2))
    e = np.sqrt(0.25 + np.sum(k**2, axis=1))
    for m in (dirac_gapped(0.5), dirac_diagonal(0.5)):
        np.testing.assert_allclose(fiber(m, k).E, np.stack([-e, e], 1), atol=1e-14)


def test_near_gapless_limit():
    E = fiber(dirac_gapped(1e-12), np.array([3.0, 4.0])).E
    np.testing.assert_allclose(E, [-5.0, 5.0], atol=1e-12)


def test_gapped_resolvent_at_origin():
    # at k = 0, xi = 0 the fiber is diag(delta, -delta)
    R = resolvent(fiber(dirac_gapped(1.0), np.zeros(2)), 0.0 + 0j)
    np.testing.assert_allclose(R, np.diag([1.0, -1.0]), atol=1e-12)


def test_gapped_resolvent_general(rng):
    d = 0.8
    k = rng.uniform(-2, 2, 2)
    xi = 0.3 + 0.2j
    kc = k[0] + 1j * k[1]
    expect = np.array([[-d - xi, -kc], [-np.conj(kc), d - xi]]) / ((d - xi) * (-d - xi) - abs(kc) ** 2)
    np.testing.assert_allclose(resolvent(fiber(dirac_gapped(d), k), xi), expect, atol=1e-13)


def test_nonpositive_gap():
    for ctor in (dirac_gapped, dirac_diagonal):
        with pytest.raises(NonPositiveGap):
            ctor(0.0)


def test_p5_trace_closed_form(rng):
    m = dirac_gapped(0.9)
    for _ in range(20):
        k = rng.uniform(-3, 3, 2)
        xi = complex(rng.normal(), 0.2 + rng.random())
        H, dH, _ = m.matrices(k)
        assert np.trace(p5_matrix(H[0], dH[0], xi)) == pytest.approx(p5_gapped_trace(0.9, k, xi), rel=1e-11)


def test_diagonal_fiber_p5_vanishes(rng):
    m = dirac_diagonal(0.9)
    H, dH, _ = m.matrices(rng.uniform(-3, 3, (1, 2)))
    assert np.max(np.abs(p5_matrix(H[0], dH[0], 0.4 + 0.3j))) < 1e-15


def test_change_of_basis_report():
    rep = change_of_basis_demo(1.0, (1.0, 1.0), 1j)
    assert rep.conjugation_residual <= 1e-12
    assert abs(rep.trace_p5_diag_conjugated) <= 1e-14
    assert rep.w5_rel_err <= 1e-10


def test_basis_inverse(rng):
    P, Pinv = basis_change(0.7, rng.uniform(-2, 2, 2))
    np.testing.assert_allclose(P @ Pinv, np.eye(2), atol=1e-14)


def test_singular_basis_at_gapless_dirac_point():
    with pytest.raises(SingularBasis):
        basis_change(0.0, (0.0, 0.0))


def test_honeycomb_gap_and_band_top():
    m = honeycomb(onsite_gap=0.6)
    rc = reciprocal(m, 2)
    f = fiber(m, np.array([(2 * rc.b1 + rc.b2) / 3, [0.0, 0.0]]))
    assert f.E[0, 1] - f.E[0, 0] == pytest.approx(0.6, abs=1e-13)
    assert f.E[1, 1] == pytest.approx(math.sqrt(9 + 0.09), abs=1e-13)


def test_gapless_honeycomb_gap_closes_with_refinement():
    m = honeycomb()
    gaps = [fiber(m, reciprocal(m, n).grid.points).min_gap().min() for n in (10, 20, 40, 80)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    # grids whose order is a multiple of 3 contain the zone corners, where the bands touch
    assert fiber(m, reciprocal(m, 48).grid.points).min_gap().min() < 1e-12


def test_registry():
    assert get_model("dirac-d", delta=0.3).params == (("delta", 0.3),)
    assert get_model("honeycomb", onsite_gap=0.2).M == 2
    with pytest.raises(ConfigError):
        get_model("kagome")
    with pytest.raises(ConfigError):
        honeycomb(t=0.0)


def test_real_hoppings_give_real_symmetric_matrix_at_b0():
    from orbsus.finite_lattice import build_harper

    H = build_harper(honeycomb(), 2, 0.0).Hmat
    assert np.all(H.imag == 0)
