import math

import numpy as np
import pytest

from cascadecert import dynamics as dyn
from cascadecert import geometry as geo
from cascadecert import systems as S
from cascadecert.errors import ConstructionError, NumericError


@pytest.fixture(scope="module")
def cas():
    return S.torus_cascade()


def test_inner_loop_field_values():
    g = S.pendulum()
    np.testing.assert_array_equal(dyn.eval_field(g, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(dyn.eval_field(g, [-math.pi, 0.0]), [0.0, 0.0], atol=1e-15)


def test_outer_loop_field_value(cas):
    v = dyn.eval_field(cas.full, [math.pi / 2, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(v, [0.0, -1.0, 0.0, 0.0], atol=1e-15)


def test_eval_field_reports_offending_point():
    bad = dyn.SystemDef(S.LINE, lambda p: 1.0 / np.where(p == 0.0, 0.0, 1.0) * np.where(p == 0.0, np.nan, p))
    with pytest.raises(NumericError) as info:
        dyn.eval_field(bad, np.array([[1.0], [0.0]]))
    assert info.value.point.tolist() == [0.0]


def test_unforced_outer_is_damped_pendulum(cas):
    uo = dyn.unforced_outer(cas)
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, (100, 2))
    expected = np.stack([x[:, 1], -(np.sin(x[:, 0]) + x[:, 1])], axis=-1)
    np.testing.assert_allclose(uo.field(x), expected, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(uo.field(np.zeros(2)), [0.0, 0.0])


def test_unforced_outer_of_decoupled_cascade_is_f():
    dc = S.decoupled_cascade()
    x = np.random.default_rng(1).uniform(-3, 3, (20, 2))
    y = np.random.default_rng(2).uniform(-3, 3, (20, 2))
    np.testing.assert_array_equal(dyn.unforced_outer(dc).field(x), dc.f(x, y))


def test_interconnection(cas):
    rng = np.random.default_rng(3)
    x = rng.uniform(-3, 3, (200, 2))
    y = rng.uniform(-3, 3, (200, 2))
    np.testing.assert_array_equal(dyn.interconnection(cas, x, np.zeros_like(y)), 0.0)
    h = dyn.interconnection(cas, x, y)
    expected = (1 - np.cos(2 * y[:, 0])) * (np.sin(x[:, 0]) + x[:, 1])
    np.testing.assert_allclose(h[:, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(h[:, 1], expected, rtol=1e-12, atol=1e-12)
    h1 = dyn.interconnection(cas, [math.pi / 2, 1.0], [math.pi / 2, 0.0])
    assert h1[1] == pytest.approx(4.0)


def test_cascade_consistency(cas):
    rng = np.random.default_rng(4)
    z = rng.uniform(-3, 3, (500, 4))
    x, y = cas.split(z)
    F = cas.full.field(z)
    np.testing.assert_array_equal(F[:, :2], cas.f(x, y))
    np.testing.assert_array_equal(F[:, 2:], cas.inner.field(y))
    np.testing.assert_allclose(cas.f(x, y), cas.f(x, cas.rest(x)) + dyn.interconnection(cas, x, y),
                               rtol=0, atol=1e-14)


def test_cascade_rejects_nonequilibrium_rest_point():
    with pytest.raises(ConstructionError):
        dyn.CascadeDef(S.TS1, lambda x, y: x, S.pendulum(), np.array([1.0, 0.0]))


def test_gradient_system():
    g = S.gradient_circle()
    th = np.linspace(-3, 3, 50)[:, None]
    np.testing.assert_allclose(g.field(th)[:, 0], -np.sin(th[:, 0]), atol=1e-15)
    np.testing.assert_allclose(g.field(np.array([0.0])), [0.0], atol=0)
    const = dyn.ScalarField(S.CIRCLE, lambda q: np.full(q.shape[:-1], 2.0))
    np.testing.assert_allclose(dyn.make_gradient_system(S.CIRCLE, const).field(th), 0.0, atol=1e-9)


def test_gradient_system_uses_inverse_metric():
    sp = geo.SpaceSpec((geo.Factor.LINE, geo.Factor.LINE), [[2.0, 0.0], [0.0, 4.0]])
    V = dyn.ScalarField(sp, lambda q: 0.5 * np.sum(q * q, axis=-1), lambda q: q.copy())
    np.testing.assert_allclose(dyn.make_gradient_system(sp, V).field(np.array([1.0, 1.0])), [-0.5, -0.25])


def test_mechanical_system_matches_inner_loop():
    rng = np.random.default_rng(5)
    s = rng.uniform(-3, 3, (100, 2))
    expected = np.stack([s[:, 1], -(np.sin(s[:, 0]) + s[:, 1])], axis=-1)
    np.testing.assert_allclose(S.pendulum().field(s), expected, atol=1e-15)
    np.testing.assert_allclose(S.pendulum().field(np.array([0.0, 0.0])), 0.0, atol=0)


def test_mechanical_system_kappa_two():
    sys = dyn.make_mechanical_system(S.CIRCLE, [[2.0]], [[1.0]], S.cosine_potential())
    s = np.random.default_rng(6).uniform(-3, 3, (50, 2))
    np.testing.assert_allclose(sys.field(s)[:, 1], -(np.sin(s[:, 0]) + s[:, 1]) / 2, atol=1e-15)


def test_mechanical_system_rejects_non_pd():
    with pytest.raises(ConstructionError):
        dyn.make_mechanical_system(S.CIRCLE, [[-1.0]], [[1.0]], S.cosine_potential())
    with pytest.raises(ConstructionError):
        dyn.make_mechanical_system(S.CIRCLE, [[1.0]], [[0.0]], S.cosine_potential())


def test_total_energy_values():
    W = S.outer_energy()
    s = np.random.default_rng(7).uniform(-3, 3, (50, 2))
    np.testing.assert_allclose(W(s), 1 - np.cos(s[:, 0]) + s[:, 1] ** 2 / 2, atol=1e-15)
    assert W(np.zeros(2)) == 0.0
    assert W(np.array([math.pi, 1.0])) == pytest.approx(2.5)


def test_lie_derivative_of_growth_term(cas):
    W = S.outer_energy()
    rng = np.random.default_rng(8)
    x = rng.uniform(-3, 3, (100, 2))
    y = rng.uniform(-3, 3, (100, 2))
    lhs = dyn.lie_derivative(W, dyn.interconnection(cas, x, y), x)
    expected = (1 - np.cos(2 * y[:, 0])) * (np.sin(x[:, 0]) + x[:, 1]) * x[:, 1]
    np.testing.assert_allclose(lhs, expected, rtol=1e-12, atol=1e-12)
    assert dyn.lie_derivative(W, np.zeros(2), np.array([0.3, 0.4])) == 0.0
    v = dyn.interconnection(cas, [math.pi / 2, 1.0], [math.pi / 2, 0.0])
    assert dyn.lie_derivative(W, v, np.array([math.pi / 2, 1.0])) == pytest.approx(4.0)


@pytest.mark.parametrize("field", [S.cosine_potential(), S.pendulum_energy(), S.quadratic_energy(),
                                   S.torus_certificate().alpha])
def test_analytic_gradients_match_finite_differences(field):
    rng = np.random.default_rng(9)
    p = rng.uniform(-3, 3, (1000, field.space.dim))
    analytic = field.grad(p)
    numeric = dyn.fd_gradient(field.value, p)
    scale = np.maximum(np.abs(analytic), 1.0)
    assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


def test_fd_jacobian_shape_and_value():
    J = dyn.fd_jacobian(S.pendulum().field, np.array([[0.0, 0.0], [-math.pi, 0.0]]))
    assert J.shape == (2, 2, 2)
    np.testing.assert_allclose(J[0], [[0, 1], [-1, -1]], atol=1e-8)
    np.testing.assert_allclose(J[1], [[0, 1], [1, -1]], atol=1e-8)
