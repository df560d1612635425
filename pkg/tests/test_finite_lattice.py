import math

import numpy as np
import pytest

from orbsus.errors import BoundaryProximity, ConfigError, SizeLimit
from orbsus.finite_lattice import (
    FiniteLattice,
    build_harper,
    extrapolate_pressure,
    flux,
    identity_residual,
    kernel_db,
    kernel_fd,
    phase,
    pressure_from_levels,
    pressure_N,
    ttilde_norm,
)
from orbsus.lattice import build_model
from orbsus.models import honeycomb
from orbsus.thermo import ThermoState, pressure_bulk


def test_site_count():
    for N in (1, 3):
        assert len(FiniteLattice.build(honeycomb(), N)) == (2 * N + 1) ** 2 * 2
    with pytest.raises(ConfigError):
        FiniteLattice.build(honeycomb(), 0)


def test_phase_antisymmetric_and_flux_is_signed_area(rng):
    u, v, w = rng.normal(size=(3, 2))
    assert phase(u, v) == pytest.approx(-phase(v, u))
    area = 0.5 * ((v - u)[0] * (w - u)[1] - (v - u)[1] * (w - u)[0])
    assert abs(flux(u, v, w)) == pytest.approx(abs(area), rel=1e-12)


def test_hermitian_and_covariant():
    op = build_harper(honeycomb(), 3, 0.7)
    np.testing.assert_allclose(op.Hmat, op.Hmat.conj().T, atol=1e-14)
    assert op.covariance_residual((1, 0)) <= 1e-14
    assert op.covariance_residual((-1, 2)) <= 1e-14


def test_field_keeps_sparsity():
    a = build_harper(honeycomb(), 2, 0.0).Hmat
    b = build_harper(honeycomb(), 2, 1.3).Hmat
    assert np.array_equal(a != 0, b != 0)
    np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-15)


def test_size_cap():
    with pytest.raises(SizeLimit):
        build_harper(honeycomb(), 10, 0.0, size_cap=100)


def test_single_level_pressure():
    assert pressure_from_levels([0.0], 2.0, 3.0, 1) == pytest.approx(math.log(4.0) / 2.0)


def test_pressure_linear_in_small_z():
    op = build_harper(honeycomb(), 2, 0.0)
    E = op.eigvalsh()
    z = 1e-12
    assert pressure_N(op, 1.0, z) == pytest.approx(z * np.mean(np.exp(-E)), rel=1e-9)


def test_chain_pressure_edge_correction():
    # decoupled two-site cells: every cell is complete, so P_N equals the bulk value for all N
    raw = {
        "lattice": {"a1": [3.0, 0.0], "a2": [0.0, 3.0]},
        "site": [{"position": [0, 0]}, {"position": [1, 0]}],
        "hop": [{"i": 1, "j": 0, "cell": [0, 0], "t": 1.0}],
    }
    m = build_model(raw)
    exact = pressure_bulk(m, 4, ThermoState.from_fugacity(1.5, 0.7))
    assert pressure_N(build_harper(m, 2, 0.0), 1.5, 0.7) == pytest.approx(exact, rel=1e-13)


def test_extrapolation_recovers_polynomial_limit():
    Ns = np.array([4, 6, 8, 10, 12])
    P = 0.5 + 0.3 / Ns - 0.2 / Ns**2
    assert extrapolate_pressure(Ns, P) == pytest.approx(0.5, abs=1e-13)
    with pytest.raises(ConfigError):
        extrapolate_pressure([4, 6], [1.0, 1.0])


@pytest.mark.parametrize("b0", [0.0, 0.3])
def test_kernel_derivatives_off_diagonal(b0):
    m = honeycomb()
    op = build_harper(m, 6, b0)
    lat = op.lattice
    x, y = lat.ordinal((0, 0), 0), lat.ordinal((1, 0), 1)
    xi = 0.3 + 0.5j
    for order in (1, 2):
        an = kernel_db(op, x, y, xi, order)
        assert an == pytest.approx(kernel_fd(m, 6, b0, x, y, xi, order), rel=1e-6)


def test_kernel_near_edge_rejected():
    op = build_harper(honeycomb(), 4, 0.0)
    edge = op.lattice.ordinal((4, 4), 1)
    with pytest.raises(BoundaryProximity):
        kernel_db(op, edge, edge, 0.5j)


def test_ttilde_zero_field_step():
    op = build_harper(honeycomb(), 3, 0.2)
    assert ttilde_norm(op, 0.0, 0.5j) == 0.0


def test_ttilde_linear_and_identity_exact():
    op = build_harper(honeycomb(), 5, 0.1)
    r = ttilde_norm(op, 1e-3, 0.5j) / ttilde_norm(op, 5e-4, 0.5j)
    assert r == pytest.approx(2.0, rel=0.05)
    assert identity_residual(honeycomb(), 5, 0.1, 0.05, 0.5j) <= 1e-10
