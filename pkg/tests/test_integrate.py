import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cascadecert import dynamics as dyn
from cascadecert import geometry as geo
from cascadecert import integrate as I
from cascadecert import systems as S
from cascadecert.errors import DivergenceError, InputError, NumericError


def _pendulum_rhs(t, y):
    return [y[1], -np.sin(y[0]) - y[1]]


def test_equilibrium_is_fixed():
    tr = I.flow(S.pendulum(), [0.0, 0.0], 100.0, 1e-9)
    assert np.max(geo.dist(tr.space, tr.points, np.zeros(2))) < 1e-6
    tr = I.flow(S.torus_cascade().full, np.zeros(4), 100.0, 1e-9)
    assert np.max(geo.dist(tr.space, tr.points, np.zeros(4))) < 1e-6


def test_saddle_drift_stays_small_over_short_horizon():
    # sin(-pi) is ~1e-16, not zero, and the saddle amplifies it at rate ~0.62
    tr = I.flow(S.pendulum(), [-math.pi, 0.0], 20.0, 1e-9)
    assert np.max(geo.dist(tr.space, tr.points, [-math.pi, 0.0])) < 1e-6


def test_semigroup_property():
    sys = S.torus_cascade().full
    tol = 1e-9
    p0 = np.array([1.618, 3.4072, 1.5977, 3.1428])
    direct = I.flow_to(sys, p0, 7.5, tol)
    split = I.flow_to(sys, I.flow_to(sys, p0, 3.0, tol), 4.5, tol)
    assert geo.dist(sys.space, direct, split) < 10 * tol


def test_semigroup_property_pendulum():
    tol = 1e-9
    sys = S.pendulum()
    direct = I.flow_to(sys, [3.0, 0.0], 10.0, tol)
    split = I.flow_to(sys, I.flow_to(sys, [3.0, 0.0], 4.0, tol), 6.0, tol)
    assert geo.dist(sys.space, direct, split) < 10 * tol


def test_pendulum_converges_from_three():
    tr = I.flow(S.pendulum(), [3.0, 0.0], 50.0, 1e-9)
    assert geo.dist(tr.space, tr.final, np.zeros(2)) < 1e-4


def test_matches_independent_reference_solver():
    te = np.linspace(0, 30, 301)
    ref = solve_ivp(_pendulum_rhs, (0, 30), [3.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-13,
                    t_eval=te).y.T
    ours = I.flow(S.pendulum(), [3.0, 0.0], 30.0, 1e-10, t_eval=te)
    err = geo.dist(S.TS1, ours.points, geo.canonicalize(S.TS1, ref))
    assert err.max() < 1e-8


def test_integrator_order_sanity():
    """Halving tol cuts the error against a tol=1e-12 reference at least in half."""
    sys = S.pendulum()
    te = np.linspace(0, 20, 401)
    ref = I.flow(sys, [3.0, 0.0], 20.0, 1e-12, t_eval=te).points
    ratios = {}
    for tol in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9):
        e1 = geo.dist(sys.space, I.flow(sys, [3.0, 0.0], 20.0, tol, t_eval=te).points, ref).max()
        e2 = geo.dist(sys.space, I.flow(sys, [3.0, 0.0], 20.0, tol / 2, t_eval=te).points, ref).max()
        ratios[tol] = e1 / e2
    assert all(r >= 2.0 for r in ratios.values()), ratios


def test_trajectory_invariants():
    tr = I.flow(S.torus_cascade().full, [1.618, 3.4072, 1.5977, 3.1428], 20.0, 1e-8)
    assert np.all(np.diff(tr.times) > 0)
    assert len(tr.times) == len(tr.points)
    np.testing.assert_array_equal(geo.canonicalize(tr.space, tr.points), tr.points)
    assert tr.times[-1] == 20.0
    assert tr.steps > 0


def test_dense_output_at_requested_times():
    te = np.array([0.0, 0.37, 1.0, 2.5])
    tr = I.flow(S.pendulum(), [1.0, 0.0], 2.5, 1e-10, t_eval=te)
    np.testing.assert_array_equal(tr.times, te)
    ref = solve_ivp(_pendulum_rhs, (0, 2.5), [1.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-13,
                    t_eval=te).y.T
    np.testing.assert_allclose(tr.points, ref, atol=1e-8)


def test_circle_coordinates_wrap_but_dynamics_do_not_see_it():
    # a rotating pendulum crosses the seam many times
    sys = S.undamped_pendulum()
    te = np.linspace(0, 10, 201)
    tr = I.flow(sys, [0.0, 3.0], 10.0, 1e-10, t_eval=te)
    ref = solve_ivp(lambda t, y: [y[1], -np.sin(y[0])], (0, 10), [0.0, 3.0], method="DOP853",
                    rtol=1e-13, atol=1e-13, t_eval=te).y.T
    assert np.all(tr.points[:, 0] >= -math.pi) and np.all(tr.points[:, 0] < math.pi)
    assert geo.dist(sys.space, tr.points, geo.canonicalize(sys.space, ref)).max() < 1e-7


def test_divergence_is_reported():
    blowup = dyn.SystemDef(S.LINE, lambda p: p * p)
    with pytest.raises(DivergenceError) as info:
        I.flow(blowup, [1.0], 5.0, 1e-8)
    assert 0.9 < info.value.last_time < 1.0


def test_batch_marks_divergent_rows():
    blowup = dyn.SystemDef(S.LINE, lambda p: p * p)
    res = I.flow_batch(blowup, np.array([[-1.0], [1.0]]), 5.0, 1e-8)
    assert res.status.tolist() == [I.OK, I.DIVERGED]


def test_batch_agrees_with_single():
    sys = S.torus_cascade().full
    p0 = np.random.default_rng(0).uniform(-3, 3, (8, 4))
    res = I.flow_batch(sys, p0, 10.0, 1e-9)
    for i in range(8):
        assert geo.dist(sys.space, res.final[i], I.flow_to(sys, p0[i], 10.0, 1e-9)) < 1e-7


def test_energy_monotone_on_mechanical_flows():
    sys = S.pendulum()
    W = S.pendulum_energy()
    tol = 1e-9
    starts = geo.RegionSpec(S.TS1, (None, (-4.0, 4.0))).sample(np.random.default_rng(11), 100)
    te = np.linspace(0, 30, 601)
    res = I.flow_batch(sys, starts, 30.0, tol, te)
    assert res.ok.all()
    w = W(res.samples)
    assert np.all(np.diff(w, axis=1) <= 10 * tol)


def test_bad_arguments():
    with pytest.raises(InputError):
        I.flow(S.pendulum(), [0.0, 0.0], -1.0)
    with pytest.raises(InputError):
        I.flow(S.pendulum(), [0.0, 0.0], 1.0, tol=0.0)
    with pytest.raises(NumericError):
        I.flow(S.pendulum(), [np.nan, 0.0], 1.0)
