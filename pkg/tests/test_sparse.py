import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcsflow import (GridSpec, SelectionError, SnapshotMatrix, TimeGrid, WaypointSet, pod_svd,
                     random_measurement_matrix, score_waypoint_set, select_waypoints,
                     solve_basis_pursuit)
from dcsflow.sparse import _kkt_violation, soft_threshold, transform_basis


def test_delta_impulse_structure_and_determinism():
    C = random_measurement_matrix("delta-impulse", 3, 10, seed=7)
    D = C.to_dense()
    assert D.shape == (3, 10)
    np.testing.assert_array_equal(D.sum(axis=1), np.ones(3))
    assert set(np.unique(D)) <= {0.0, 1.0}
    assert len(set(C.columns.tolist())) == 3
    again = random_measurement_matrix("delta-impulse", 3, 10, seed=7)
    np.testing.assert_array_equal(C.columns, again.columns)
    x = np.arange(10.0)
    np.testing.assert_array_equal(C.apply(x), D @ x)


def test_gaussian_statistics():
    m, n = 100, 1000
    C = random_measurement_matrix("gaussian", m, n, seed=3)
    E = C.entries
    sigma = 1 / np.sqrt(m)
    assert abs(E.mean()) < 5 * sigma / np.sqrt(m * n)
    assert E.var() == pytest.approx(1 / m, rel=0.1)


def test_bernoulli_entries():
    C = random_measurement_matrix("bernoulli", 4, 9, seed=0)
    np.testing.assert_allclose(np.abs(C.entries), 0.5)
    assert C.top_columns(4).size == 4


@pytest.mark.parametrize("m,n", [(10, 10), (11, 10), (0, 10)])
def test_subsampling_bounds(m, n):
    with pytest.raises(ValueError):
        random_measurement_matrix("delta-impulse", m, n, seed=0)


def test_unknown_kind():
    with pytest.raises(ValueError):
        random_measurement_matrix("uniform", 2, 5, seed=0)


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 2.0]), 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 1.0])


def test_identity_recovers_y():
    y = np.zeros(12)
    y[2], y[7] = 1.5, -0.3
    sol = solve_basis_pursuit(np.eye(12), y)
    assert sol.converged
    np.testing.assert_allclose(sol.s_hat, y, atol=1e-6)


def test_zero_measurement():
    Theta = np.random.default_rng(0).normal(size=(5, 9))
    sol = solve_basis_pursuit(Theta, np.zeros(5))
    assert not sol.s_hat.any()
    assert sol.residual == 0.0 and sol.iterations == 1 and sol.converged


def test_invalid_inputs():
    with pytest.raises(ValueError):
        solve_basis_pursuit(np.zeros((3, 4)), np.ones(3))
    with pytest.raises(ValueError):
        solve_basis_pursuit(np.eye(3), np.ones(3), eps_noise=-1.0)


def _planted(seed, m=20, n=64, k=3):
    rng = np.random.default_rng(seed)
    Theta = random_measurement_matrix("gaussian", m, n, seed).entries
    s0 = np.zeros(n)
    s0[rng.choice(n, k, replace=False)] = rng.choice([-1.0, 1.0], k)
    return Theta, s0


@pytest.mark.parametrize("seed", range(10))
def test_planted_recovery(seed):
    Theta, s0 = _planted(seed)
    sol = solve_basis_pursuit(Theta, Theta @ s0)
    assert np.linalg.norm(sol.s_hat - s0) / np.linalg.norm(s0) < 1e-3
    assert set(np.flatnonzero(np.abs(sol.s_hat) > 1e-3)) == set(np.flatnonzero(s0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_kkt_conditions_at_convergence(seed):
    Theta, s0 = _planted(seed, m=15, n=40, k=2)
    y = Theta @ s0
    g = 1e-3 * np.max(np.abs(Theta.T @ y))
    sol = solve_basis_pursuit(Theta, y, gamma=g)
    assert sol.gamma == pytest.approx(g)
    grad = Theta.T @ (Theta @ sol.s_hat - y)
    assert np.max(np.abs(grad)) <= g * (1 + 1e-3)
    assert _kkt_violation(grad, sol.s_hat, g) <= 1e-3 * g


def test_noise_tolerance_stops_early():
    Theta, s0 = _planted(1)
    y = Theta @ s0
    eps = 0.05 * np.linalg.norm(y)
    sol = solve_basis_pursuit(Theta, y, eps_noise=eps)
    assert sol.converged and sol.residual <= eps
    # a looser fit keeps l1 no larger than the exact one
    exact = solve_basis_pursuit(Theta, y)
    assert np.abs(sol.s_hat).sum() <= np.abs(exact.s_hat).sum() + 1e-9


def test_nonconvergence_is_reported():
    Theta, s0 = _planted(2)
    sol = solve_basis_pursuit(Theta, Theta @ s0, max_iter=3)
    assert not sol.converged and sol.iterations == 3


def test_transform_basis_drops_null_directions(small_X):
    Psi = transform_basis(small_X)
    s = np.linalg.svd(small_X.data, compute_uv=False)
    assert Psi.shape == (small_X.shape[0], int(np.sum(s > 1e-10 * s[0])))
    np.testing.assert_allclose(Psi.T @ Psi, np.eye(Psi.shape[1]), atol=1e-10)


def _synthetic(r=3, seed=0, grid=GridSpec(6, 4), T=40):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(2 * grid.n_loc, r)))
    data = Q @ rng.normal(size=(r, T))
    return SnapshotMatrix(data, rng.normal(size=2 * grid.n_loc), grid, TimeGrid(count=T))


def test_score_complete_measurements(small_X, small_basis):
    err = score_waypoint_set(np.arange(small_X.grid.n_loc), small_basis, small_X)
    tail = np.abs(small_X.data - small_basis.modes @ (small_basis.modes.T @ small_X.data)).sum()
    assert err == pytest.approx(tail, rel=1e-6, abs=1e-6 * np.abs(small_X.data).sum())


def test_score_planted_span():
    X = _synthetic()
    b = pod_svd(X, rank=3)
    err = score_waypoint_set([0, 5, 11], b, X)
    assert err < 1e-8 * np.abs(X.data).sum()


def test_score_zero_modes(small_X):
    b = pod_svd(small_X, rank=0)
    assert score_waypoint_set([1, 2], b, small_X) == pytest.approx(np.abs(small_X.data).sum())


@pytest.mark.parametrize("ids", [[], [1, 1], [-1], [10_000]])
def test_score_rejects_bad_ids(small_X, small_basis, ids):
    with pytest.raises(ValueError):
        score_waypoint_set(ids, small_basis, small_X)


def test_select_argmin_and_structure(small_X, small_basis):
    w = select_waypoints(small_X, small_basis, m=5, c1=8, seed=11)
    assert w.m == 5 and len(set(w.ids)) == 5
    np.testing.assert_array_equal(w.positions, small_X.grid.positions(w.ids))
    ok = [t.error for t in w.trials if t.bp_converged]
    assert w.recon_error == min(ok)
    assert w.recon_error == score_waypoint_set(w.ids, small_basis, small_X)
    first = [t.index for t in w.trials if t.bp_converged and t.error == w.recon_error][0]
    assert w.trial_index == first


def test_select_deterministic(small_X, small_basis):
    a = select_waypoints(small_X, small_basis, m=3, c1=1, seed=5)
    b = select_waypoints(small_X, small_basis, m=3, c1=1, seed=5)
    assert a.to_dict() == b.to_dict()


def test_select_near_complete(small_X, small_basis):
    n = small_X.grid.n_loc
    w = select_waypoints(small_X, small_basis, m=n - 1, c1=1, seed=0)
    rec = small_basis.modes @ (small_basis.modes.T @ small_X.data)
    tail = np.abs(rec - small_X.data).sum()
    # near-complete sensing matches the best rank-r projection
    assert abs(w.recon_error - tail) < 1e-6 * np.abs(small_X.data).sum()


def test_select_dense_kind(small_X, small_basis):
    w = select_waypoints(small_X, small_basis, m=4, c1=2, seed=1, kind="gaussian")
    assert w.m == 4


def test_select_errors(small_X, small_basis):
    with pytest.raises(ValueError):
        select_waypoints(small_X, small_basis, m=small_X.grid.n_loc, c1=1)
    with pytest.raises(ValueError):
        select_waypoints(small_X, small_basis, m=0, c1=1)
    with pytest.raises(ValueError):
        select_waypoints(small_X, small_basis, m=2, c1=0)
    with pytest.raises(SelectionError) as info:
        select_waypoints(small_X, small_basis, m=2, c1=3, max_iter=1)
    assert len(info.value.trials) == 3


def test_waypoint_json_round_trip(tmp_path, small_X, small_basis):
    w = select_waypoints(small_X, small_basis, m=3, c1=2, seed=2)
    w.to_json(tmp_path / "w.json")
    d = json.loads((tmp_path / "w.json").read_text())
    assert set(d) >= {"m", "ids", "positions", "recon_error", "seed", "trials"}
    assert len(d["trials"]) == 2
    back = WaypointSet.from_json(tmp_path / "w.json")
    assert back.to_dict() == w.to_dict()


def test_select_handles_corner_nodes(small_X, small_basis):
    g = small_X.grid
    corners = {0, g.nx - 1, g.n_loc - g.nx, g.n_loc - 1}
    w = select_waypoints(small_X, small_basis, m=1, c1=40, seed=0)
    hit = [t for t in w.trials if t.ids[0] in corners]
    assert hit and all(t.bp_iterations == 0 for t in hit if t.ids[0] == 0)
    assert w.recon_error == min(t.error for t in w.trials if t.bp_converged)
