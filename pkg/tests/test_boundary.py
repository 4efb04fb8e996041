import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metastat.boundary import (SIDES, EmissionProfile, Side, boundary_nodes, boundary_point,
                               boundary_quadrature, chart, emission_N, g_dot_nu, side_length, unchart)
from metastat.errors import ConfigError, DomainError, NumericalError
from metastat.growth import GrowthParams

B = GrowthParams().b
L = B - 1.0


def test_chart_sides():
    assert chart(Side.G1, 0.3, B) == (1.0, 1.3)
    assert chart(Side.G2, 0.3, B) == (1.3, B)
    assert chart(Side.G3, 0.3, B) == (B, B - 0.3)
    assert chart(Side.G4, 0.3, B) == (B - 0.3, 1.0)


def test_orientation_closes_the_perimeter():
    # each side ends where the next one starts, and the four lengths sum to the perimeter
    for k, side in enumerate(SIDES):
        end = chart(side, L, B)
        start = chart(SIDES[(k + 1) % 4], 0.0, B)
        assert np.allclose(end, start)
    assert 4 * side_length(B) == pytest.approx(4 * (B - 1))


def test_unchart_roundtrip(params):
    for side in SIDES:
        for s in (1e-3, 0.4, L - 1e-3):
            p = chart(side, s, B)
            sig = unchart(p, params)
            assert sig.side == side
            assert abs(sig.s - s) <= 1e-12
            assert np.allclose(chart(sig.side, sig.s, B), p, atol=1e-12)


@pytest.mark.parametrize("p", [(1.0, 1.0), (1.0, B), (B, B), (B, 1.0)])
def test_corners_rejected(params, p):
    with pytest.raises(DomainError, match="corner"):
        unchart(p, params)


def test_off_boundary_rejected(params):
    with pytest.raises(DomainError):
        unchart((1.5, 1.5), params)


@pytest.mark.parametrize("s", [0.0, L, -0.1, L + 0.1, float("nan")])
def test_boundary_point_needs_open_side(params, s):
    with pytest.raises(DomainError):
        boundary_point(Side.G1, s, params)


def test_field_enters_on_every_open_side(params):
    sides, s, _ = boundary_nodes(B, 64)
    assert np.all(g_dot_nu(sides, s, params) < 0)


def test_inward_normal(params):
    sig = boundary_point(Side.G3, 0.5, params)
    assert np.allclose(sig.inward_normal, [-1.0, 0.0])


def test_hat_profile_peak_and_support():
    w = 0.6
    prof = EmissionProfile.hat(B, center=0.9, width=w)
    assert prof.value(1, 0.9) == pytest.approx(2.0 / w)  # area of a triangle = 1
    assert prof.value(1, 0.9 + w / 2 + 1e-9) == 0.0
    assert prof.value(2, 0.9) == 0.0


def test_default_hat_centered_on_first_side(params):
    prof = EmissionProfile.hat(B)
    assert prof.side == Side.G1 and prof.center == pytest.approx(L / 2) and prof.width == pytest.approx(L / 2)
    sig = boundary_point(Side.G2, 0.9, params)
    assert emission_N(sig, prof) == 0.0


def test_profile_normalised():
    prof = EmissionProfile.hat(B)
    total = boundary_quadrature(lambda side, s: prof.value(side, s), B, 256)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_hat_lipschitz_constant_bounds_slopes():
    prof = EmissionProfile.hat(B)
    s = np.linspace(0, L, 2001)
    v = prof.value(1, s)
    assert np.max(np.abs(np.diff(v) / np.diff(s))) <= prof.lipschitz * (1 + 1e-9)


def test_quadrature_perimeter_and_ramp():
    assert boundary_quadrature(lambda side, s: np.ones_like(s), B, 10) == pytest.approx(4 * L)
    ramp = lambda side, s: np.where(side == 1, s, 0.0)
    assert boundary_quadrature(ramp, B, 7) == pytest.approx(L**2 / 2, rel=1e-13)


def test_quadrature_second_order():
    f = lambda side, s: np.sin(s) * side
    exact = (1 + 2 + 3 + 4) * (1 - np.cos(L))
    e1 = abs(boundary_quadrature(f, B, 16) - exact)
    e2 = abs(boundary_quadrature(f, B, 32) - exact)
    assert 3.5 < e1 / e2 < 4.5


def test_quadrature_rejects_nan():
    with pytest.raises(NumericalError):
        boundary_quadrature(lambda side, s: np.where(s > 0.5, np.nan, 1.0), B, 8)


def test_midpoint_nodes_avoid_corners():
    sides, s, w = boundary_nodes(B, 8)
    assert s.min() > 0 and s.max() < L
    assert w.sum() == pytest.approx(4 * L)


def test_table_profile_roundtrip(tmp_path):
    path = tmp_path / "n.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["side", "s", "value"])
        wr.writerows([(1, 0.2, 0), (1, 0.5, 3), (1, 0.8, 0), (3, 0.1, 0), (3, 0.3, 1), (3, 0.5, 0)])
    prof = EmissionProfile.load_csv(B, path)
    total = boundary_quadrature(lambda side, s: prof.value(side, s), B, 4000)
    assert total == pytest.approx(1.0, rel=1e-5)
    # the table's own integral: 0.9 on side 1 and 0.2 on side 3
    assert prof.scale == pytest.approx(1 / 1.1)
    again = EmissionProfile.from_table(B, prof.to_rows())
    assert np.allclose(again.value(1, np.linspace(0, L, 50)), prof.value(1, np.linspace(0, L, 50)))


@pytest.mark.parametrize("rows", [
    [(1, 0.2, 1), (1, 0.5, 0)],           # does not vanish at its first end
    [(1, 0.2, 0), (1, 0.5, -1), (1, 0.7, 0)],
    [(5, 0.2, 0), (5, 0.5, 1), (5, 0.7, 0)],
    [(1, 0.2, 0), (1, 0.5, 0)],
])
def test_bad_tables(rows):
    with pytest.raises(ConfigError):
        EmissionProfile.from_table(B, rows)


def test_hat_outside_side_rejected():
    with pytest.raises(ConfigError):
        EmissionProfile.hat(B, center=0.1, width=0.5)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(SIDES)), st.floats(1e-6, L - 1e-6))
def test_chart_unchart_property(side, s):
    p = GrowthParams()
    sig = unchart(chart(side, s, B), p)
    assert sig.side == side and abs(sig.s - s) <= 1e-12
    assert sig.g_dot_nu < 0
