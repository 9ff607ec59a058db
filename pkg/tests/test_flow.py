import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcsflow import (DomainError, DoubleGyreParams, GridSpec, TimeGrid, build_snapshot_matrix,
                     grid_velocity, stream_function, velocity, velocity_field)

P = DoubleGyreParams()
xs = st.floats(0.05, 1.95)
ys = st.floats(0.05, 0.95)
ts = st.floats(0.0, 30.0)
params = st.builds(DoubleGyreParams, A=st.floats(0.01, 1.0), epsilon=st.floats(0.0, 0.49),
                   omega=st.floats(0.0, 3.0))


def test_stream_function_examples():
    assert stream_function((0.5, 1.0), 3.7, P) == pytest.approx(0.0, abs=1e-15)
    assert stream_function((0.5, 0.5), 0.0, DoubleGyreParams(0.1, 0.25, 1.3)) == pytest.approx(0.1, abs=1e-15)
    assert stream_function((1.0, 0.5), 0.0, DoubleGyreParams(0.7, 0.4)) == pytest.approx(0.0, abs=1e-15)


def test_velocity_examples():
    np.testing.assert_allclose(velocity((0.5, 0.5), 0.0, P), [0.0, 0.0], atol=1e-15)
    u, v = velocity((0.5, 0.25), 0.0, DoubleGyreParams(0.1, 0.1))
    assert u == pytest.approx(-0.1 * math.pi * math.cos(math.pi / 4), abs=1e-12)
    assert u == pytest.approx(-0.2221, abs=1e-4)
    assert v == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("p", [(-0.01, 0.5), (2.01, 0.5), (1.0, -1e-6), (1.0, 1.5)])
def test_out_of_domain(p):
    with pytest.raises(DomainError):
        stream_function(p, 0.0, P)
    with pytest.raises(DomainError):
        velocity(p, 0.0, P)


def test_param_validation():
    for bad in [dict(A=0.0), dict(epsilon=0.5), dict(epsilon=-0.1), dict(omega=-1.0)]:
        with pytest.raises(ValueError):
            DoubleGyreParams(**bad)
    assert DoubleGyreParams(epsilon=0.0).steady
    assert not P.steady


@settings(max_examples=60, deadline=None)
@given(xs, ys, ts, params)
def test_velocity_is_curl_of_stream_function(x, y, t, prm):
    h = 1e-5
    dpsi_dy = (stream_function((x, y + h), t, prm) - stream_function((x, y - h), t, prm)) / (2 * h)
    dpsi_dx = (stream_function((x + h, y), t, prm) - stream_function((x - h, y), t, prm)) / (2 * h)
    u, v = velocity((x, y), t, prm)
    scale = prm.A * math.pi**2 * 4
    assert u == pytest.approx(-dpsi_dy, abs=1e-8 * scale)
    assert v == pytest.approx(dpsi_dx, abs=1e-8 * scale)


@settings(max_examples=60, deadline=None)
@given(xs, ys, ts, params)
def test_incompressible(x, y, t, prm):
    h = 1e-4
    du = velocity((x + h, y), t, prm)[0] - velocity((x - h, y), t, prm)[0]
    dv = velocity((x, y + h), t, prm)[1] - velocity((x, y - h), t, prm)[1]
    assert (du + dv) / (2 * h) == pytest.approx(0.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(xs, ys, ts, params, st.floats(0.05, 3.0))
def test_periodic_in_time(x, y, t, prm, omega):
    prm = DoubleGyreParams(prm.A, prm.epsilon, omega)
    a = velocity((x, y), t, prm)
    b = velocity((x, y), t + 2 * math.pi / prm.omega, prm)
    np.testing.assert_allclose(a, b, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2), st.floats(0, 1), ts, params)
def test_walls_are_impermeable(x, y, t, prm):
    for yw in (0.0, 1.0):
        assert velocity((x, yw), t, prm)[1] == pytest.approx(0.0, abs=1e-14)
    for xw in (0.0, 2.0):
        assert velocity((xw, y), t, prm)[0] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(xs, ys, params)
def test_steady_when_epsilon_zero(x, y, prm):
    prm = DoubleGyreParams(prm.A, 0.0, prm.omega)
    np.testing.assert_array_equal(velocity((x, y), 0.0, prm), velocity((x, y), 7.3, prm))


def test_vectorized_matches_pointwise():
    rng = np.random.default_rng(0)
    x, y, t = rng.uniform(0, 2, 50), rng.uniform(0, 1, 50), rng.uniform(0, 20, 50)
    u, v = velocity_field(x, y, t, P)
    for i in range(50):
        np.testing.assert_allclose([u[i], v[i]], velocity((x[i], y[i]), t[i], P), rtol=0, atol=1e-15)


def test_grid_velocity_matches_nodes():
    g = GridSpec(7, 4)
    t = np.array([0.0, 0.3, 5.1])
    F = grid_velocity(g, t, P)
    pos = g.positions()
    for k, tk in enumerate(t):
        u, v = velocity_field(pos[:, 0], pos[:, 1], tk, P)
        np.testing.assert_array_equal(F[:, k], np.concatenate([u, v]))
    np.testing.assert_array_equal(grid_velocity(g, 0.3, P), F[:, 1])


def test_grid_layout():
    g = GridSpec(5, 3)
    assert g.n_loc == 15
    assert g.x[0] == 0.0 and g.x[-1] == 2.0 and g.y[0] == 0.0 and g.y[-1] == 1.0
    loc = np.arange(g.n_loc)
    i, j = g.ij(loc)
    np.testing.assert_array_equal(g.linear_index(i, j), loc)
    # x varies fastest
    np.testing.assert_array_equal(g.positions([0, 1, 5]), [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]])
    np.testing.assert_array_equal(g.state_rows([2, 4]), [2, 4, 17, 19])
    assert GridSpec.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        GridSpec(1, 5)


def test_time_grid():
    tg = TimeGrid(0.5, 0.25, 4)
    np.testing.assert_allclose(tg.times, [0.5, 0.75, 1.0, 1.25])
    with pytest.raises(ValueError):
        TimeGrid(dt=0.0)
    with pytest.raises(ValueError):
        TimeGrid(count=0)


def test_snapshot_matrix_paper_shape(paper_X):
    assert paper_X.data.shape == (2500, 2001)
    assert paper_X.mean_field.shape == (2500,)


def test_snapshot_centering(small_X):
    assert np.abs(small_X.data.mean(axis=1)).max() < 1e-14
    raw = grid_velocity(small_X.grid, small_X.times.times, small_X.params)
    np.testing.assert_allclose(small_X.full(), raw, atol=1e-15)
    np.testing.assert_allclose(small_X.full(3), raw[:, 3], atol=1e-15)


def test_steady_snapshots_are_zero():
    g = GridSpec(6, 4)
    X = build_snapshot_matrix(g, TimeGrid(count=30), DoubleGyreParams(epsilon=0.0))
    assert not X.data.any()
    np.testing.assert_array_equal(X.mean_field, grid_velocity(g, 0.0, DoubleGyreParams(epsilon=0.0)))


def test_single_snapshot():
    g = GridSpec(6, 4)
    X = build_snapshot_matrix(g, TimeGrid(t0=2.0, count=1), P)
    assert X.data.shape == (48, 1) and not X.data.any()
    np.testing.assert_array_equal(X.mean_field, grid_velocity(g, 2.0, P))
