import math

import numpy as np
import pytest

from orbsus.errors import ConfigError, DegenerateLattice, NonHermitianConflict, RangeViolation
from orbsus.lattice import Zone, build_model, disk_grid, load_model_file, reciprocal, square_grid
from orbsus.models import honeycomb


def square_raw(**over):
    raw = {
        "lattice": {"a1": [1, 0], "a2": [0, 1]},
        "site": [{"position": [0, 0]}, {"position": [0.5, 0.5]}],
        "hop": [{"i": 1, "j": 0, "cell": [0, 0], "t": 1.0}],
    }
    raw.update(over)
    return raw


def test_hermitian_closure_adds_reverse_hops():
    m = build_model(square_raw())
    keys = {(h.i, h.j, h.cell) for h in m.hoppings}
    assert (0, 1, (0, 0)) in keys and (1, 0, (0, 0)) in keys


def test_closure_idempotent_and_fingerprint_stable():
    m = honeycomb(onsite_gap=0.6)
    again = build_model(m.to_raw())
    assert again == m
    assert again.fingerprint() == m.fingerprint()


def test_conflicting_reverse_hop_rejected():
    raw = square_raw(hop=[
        {"i": 1, "j": 0, "cell": [0, 0], "t": 1.0},
        {"i": 0, "j": 1, "cell": [0, 0], "t": 2.0},
    ])
    with pytest.raises(NonHermitianConflict):
        build_model(raw)


def test_hop_beyond_cutoff_rejected():
    raw = square_raw()
    raw["lattice"]["cutoff"] = 0.5
    with pytest.raises(RangeViolation):
        build_model(raw)


def test_collinear_generators_rejected():
    raw = square_raw()
    raw["lattice"]["a2"] = [2, 0]
    with pytest.raises(DegenerateLattice):
        build_model(raw)


def test_single_site_basis_rejected():
    raw = square_raw(site=[{"position": [0, 0]}], hop=[{"i": 0, "j": 0, "cell": [1, 0], "t": 1.0}])
    with pytest.raises(ConfigError):
        build_model(raw)


def test_toml_file_round_trip(tmp_path):
    path = tmp_path / "hc.toml"
    path.write_text(
        """
name = "hc"
[lattice]
a1 = [1.5, 0.8660254037844386]
a2 = [1.5, -0.8660254037844386]
[[site]]
position = [0.0, 0.0]
[[site]]
position = [1.0, 0.0]
[[hop]]
i = 1
j = 0
cell = [0, 0]
t = 1.0
[[hop]]
i = 1
j = 0
cell = [-1, 0]
t = 1.0
[[hop]]
i = 1
j = 0
cell = [0, -1]
t = 1.0
[zone]
n = 32
"""
    )
    m, zone = load_model_file(path)
    assert m.M == 2 and zone == {"n": 32}
    assert m.hoppings == honeycomb().hoppings


def test_malformed_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[lattice\n")
    with pytest.raises(ConfigError):
        load_model_file(path)


def test_duality_and_area():
    m = honeycomb()
    rc = reciprocal(m, 8)
    assert rc.duality_residual(m) <= 1e-12
    assert rc.area == pytest.approx((2 * math.pi) ** 2 / m.cell_area)
    assert rc.grid.weights.sum() == pytest.approx(rc.area)


def test_periodic_trapezoid_exact_for_low_harmonics():
    # integral of cos(k.a1) over the zone vanishes; the trapezoid reproduces it
    m = honeycomb()
    g = reciprocal(m, 16).grid
    assert abs(g.integrate(np.cos(g.points @ np.asarray(m.a1)))) < 1e-12
    assert abs(g.integrate(np.ones(len(g))) - g.area) < 1e-12


@pytest.mark.parametrize("K", [0.5, 5.0])
def test_disk_grid_moments(K):
    g = disk_grid(K, 32)
    r2 = np.sum(g.points**2, axis=1)
    assert g.weights.sum() == pytest.approx(math.pi * K**2, rel=1e-13)
    assert g.integrate(r2) == pytest.approx(math.pi * K**4 / 2, rel=1e-13)
    # radial singular-ish integrand resolved by the geometric panels
    assert g.integrate(1 / np.sqrt(1e-4 + r2) ** 3) == pytest.approx(
        2 * math.pi * (1 / 1e-2 - 1 / math.sqrt(1e-4 + K**2)), rel=1e-10
    )


def test_square_grid_moments():
    g = square_grid(2.0, 16)
    assert g.integrate(g.points[:, 0] ** 2 * g.points[:, 1] ** 4) == pytest.approx(
        (2 * 2**3 / 3) * (2 * 2**5 / 5), rel=1e-13
    )


def test_zone_validation():
    with pytest.raises(ConfigError):
        Zone("hexagon", 1.0)
    with pytest.raises(ConfigError):
        Zone("disk", -1.0)


def test_coarse_rule_error_estimate_small_for_smooth_function():
    g = disk_grid(5.0, 32)
    vals = np.exp(-np.sum(g.points**2, axis=1))
    assert g.error_estimate(vals) < 1e-10
