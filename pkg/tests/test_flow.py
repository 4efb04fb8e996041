import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rk4_reference
from metastat.boundary import Side, boundary_point
from metastat.errors import DomainError, SingularityError
from metastat.flow import flow, flow_batch, in_guard, inverse_flow, primary_tumor, select_tau_max
from metastat.growth import GrowthParams, velocity


def test_zero_time_is_identity(params):
    sig = boundary_point(Side.G1, 0.7, params)
    res = flow(sig, 0.0, params)
    assert res.position == (sig.x, sig.theta)
    assert res.jacobian == pytest.approx(abs(sig.g_dot_nu), rel=1e-15)


def test_converges_to_equilibrium(params):
    sig = boundary_point(Side.G2, 0.5, params)
    p = flow(sig, 50 / params.a, params).position
    assert np.hypot(p.x - params.b, p.theta - params.b) < 1e-6


def test_negative_time_rejected(params):
    with pytest.raises(DomainError):
        flow(boundary_point(Side.G1, 0.5, params), -1.0, params)


def test_matches_fine_step_reference(params):
    for side, s, tau in [(Side.G1, 0.9, 1.0), (Side.G4, 0.3, 3.0), (Side.G2, 1.5, 7.0)]:
        sig = boundary_point(side, s, params)
        got = flow(sig, tau, params, tol=1e-12).position
        ref = rk4_reference(sig.x, sig.theta, tau, params, n_steps=int(tau * 2000))
        assert np.allclose(got, ref, atol=1e-8, rtol=0)


def test_jacobian_log_identity(params):
    sig = boundary_point(Side.G1, 1.0, params)
    res = flow(sig, 2.5, params)
    assert np.log(res.jacobian) - np.log(abs(sig.g_dot_nu)) == pytest.approx(res.div_integral, abs=1e-13)


def _det_fd(params, side, s, tau, h=1e-4):
    def pos(t, ss):
        return np.array(flow(boundary_point(side, ss, params), t, params, tol=1e-13).position)
    dt = (pos(tau + h, s) - pos(tau - h, s)) / (2 * h)
    ds = (pos(tau, s + h) - pos(tau, s - h)) / (2 * h)
    return abs(dt[0] * ds[1] - dt[1] * ds[0])


@pytest.mark.parametrize("side,s,tau", [(Side.G1, 0.9, 0.5), (Side.G3, 0.4, 2.0), (Side.G4, 1.2, 3.5)])
def test_jacobian_matches_fd_determinant(params, side, s, tau):
    jac = flow(boundary_point(side, s, params), tau, params, tol=1e-13).jacobian
    assert jac == pytest.approx(_det_fd(params, side, s, tau), rel=1e-4)


def test_batch_stays_in_closed_square(params):
    s = np.linspace(0.01, params.b - 1.01, 20)
    x, th, _ = flow_batch(np.ones_like(s), 1.0 + s, np.linspace(0, 60, 301), params)
    assert x.min() >= 1.0 and th.min() >= 1.0 and x.max() <= params.b and th.max() <= params.b


def test_inverse_roundtrip_on_lattice_nodes(params):
    for side, s, tau in [(Side.G1, 0.9, 1.7), (Side.G2, 0.2, 0.4), (Side.G3, 1.6, 5.0)]:
        sig = boundary_point(side, s, params)
        p = flow(sig, tau, params).position
        tau2, sig2 = inverse_flow(p, params)
        assert sig2.side == side
        assert tau2 == pytest.approx(tau, abs=1e-6)
        assert sig2.s == pytest.approx(s, abs=1e-6)


def test_inverse_on_boundary(params):
    tau, sig = inverse_flow((1.0, 1.4), params)
    assert tau == 0.0 and sig.side == Side.G1 and sig.s == pytest.approx(0.4)


def test_inverse_outside_square(params):
    with pytest.raises(DomainError):
        inverse_flow((0.5, 1.5), params)


def test_guard_region(params):
    b = params.b
    with pytest.raises(SingularityError):
        inverse_flow((b - 1e-7 * b, b - 1e-7 * b), params)
    assert in_guard(b - 5e-7 * b, b, params)
    # just outside the guard along the slow eigendirection of the linearisation
    # [[-a, a], [c/3, -c]] the entry time is long; a direct backward RK4 march agrees
    a, c = params.a, params.c
    w, v = np.linalg.eig(np.array([[-a, a], [c / 3, -c]]))
    slow = v[:, np.argmax(w)]
    slow = -slow if slow[0] > 0 else slow
    p = (b + 2e-6 * b * slow[0], b + 2e-6 * b * slow[1])
    t_exit = _backward_exit_time(p, params, h=1e-3)
    tau, _ = inverse_flow(p, params)
    assert tau == pytest.approx(t_exit, abs=5e-3)
    assert tau > 5.0


def _backward_exit_time(p, params, h):
    a, c, d, b = params.a, params.c, params.d, params.b

    def g(y):
        x, th = y
        return -np.array([a * x * np.log(th / x), c * x - d * th * x ** (2 / 3)])

    y, t = np.array(p, dtype=float), 0.0
    while True:
        k1 = g(y)
        k2 = g(y + 0.5 * h * k1)
        k3 = g(y + 0.5 * h * k2)
        k4 = g(y + h * k3)
        nxt = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (1.0 < nxt[0] < b and 1.0 < nxt[1] < b):
            # linear interpolation of the crossing inside the last step
            dist = lambda z: min(z[0] - 1.0, b - z[0], z[1] - 1.0, b - z[1])
            return t + h * dist(y) / (dist(y) - dist(nxt))
        y, t = nxt, t + h


def test_primary_tumor_at_equilibrium(params):
    b = params.b
    traj = primary_tumor((b, b), np.linspace(0, 10, 11), params)
    assert np.all(traj == b)


def test_primary_tumor_diagonal_start(params):
    # g1 = 0 on the diagonal, so x is stationary to first order
    traj = primary_tumor((1.5, 1.5), np.array([0.0, 1e-4]), params)
    assert abs(traj[1, 0] - 1.5) < 1e-6
    assert velocity((1.5, 1.5), params)[0] == 0


def test_primary_tumor_monotone_and_reference(params):
    t = np.linspace(0, 20, 201)
    traj = primary_tumor((1.0, params.b), t, params, tol=1e-12)
    assert np.all(np.diff(traj[:, 0]) >= -1e-12)
    ref = rk4_reference(1.0, params.b, 20.0, params, 40000)
    assert np.allclose(traj[-1], ref, atol=1e-8)


def test_select_tau_max_default(params):
    s = np.linspace(0.45, 1.35, 9)
    tmax = select_tau_max(params, np.ones_like(s), 1.0 + s)
    x, th, _ = flow_batch(np.ones_like(s), 1.0 + s, [tmax / 2], params)
    assert np.max(np.hypot(x - params.b, th - params.b)) < 1e-3 * (params.b - 1)
    assert 30 < tmax < 80


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0 + 1e-3, 2.8284271 - 1e-3), st.floats(1.0 + 1e-3, 2.8284271 - 1e-3))
def test_inverse_flow_roundtrip_property(x, th):
    p = GrowthParams()
    if in_guard(x, th, p):
        return
    tau, sig = inverse_flow((x, th), p)
    q = flow(sig, tau, p).position
    assert np.hypot(q.x - x, q.theta - th) <= 1e-6 * (p.b - 1)
