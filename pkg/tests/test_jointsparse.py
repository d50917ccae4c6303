import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cosense.jointsparse import (
    InfeasibleError,
    JointSparseParams,
    detect_from_columns,
    reconstruct,
    solve_weighted_l1,
)
from cosense.scenario import ModelConfig, build_measurements, generate_scenario


def brute_force_lp(F, y, w):
    """Minimize w@x over x >= 0, F x = y by enumerating every basis of F."""
    p, n = F.shape
    best, best_x = np.inf, None
    for cols in itertools.combinations(range(n), p):
        B = F[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, y)
        if xb.min() < -1e-10:
            continue
        x = np.zeros(n)
        x[list(cols)] = np.maximum(xb, 0)
        cost = w @ x
        if cost < best - 1e-12:
            best, best_x = cost, x
    return best_x


def support(x, rel=1e-6):
    return set(np.flatnonzero(x > rel * x.max()).tolist())


def test_identity_equality():
    y = np.array([0.5, 0.0, 2.0, 1.0])
    x = solve_weighted_l1(np.eye(4), y, np.ones(4), 0.0, 1e-9)
    np.testing.assert_allclose(x, y, atol=1e-8)


def test_two_variable_lp():
    x = solve_weighted_l1(np.array([[1.0, 1.0]]), np.array([1.0]), np.array([1.0, 0.5]), 0.0, 1e-9)
    np.testing.assert_allclose(x, [0.0, 1.0], atol=1e-7)
    assert np.array([1.0, 0.5]) @ x == pytest.approx(0.5, abs=1e-7)


def test_planted_two_sparse_against_enumeration():
    r = np.random.default_rng(7)
    F = r.standard_normal((6, 12))
    x0 = np.zeros(12)
    x0[[2, 9]] = [1.3, 0.4]
    y = F @ x0
    # oracle: least squares on every support of size <= 2, keep exact nonnegative fits
    exact = []
    for k in (1, 2):
        for S in itertools.combinations(range(12), k):
            xs, *_ = np.linalg.lstsq(F[:, S], y, rcond=None)
            if np.linalg.norm(F[:, S] @ xs - y) < 1e-9 and (xs > 0).all():
                exact.append((S, xs))
    assert len(exact) == 1
    S, xs = exact[0]
    oracle = np.zeros(12)
    oracle[list(S)] = xs
    x = solve_weighted_l1(F, y, np.ones(12), 0.0, 1e-9)
    assert np.abs(x - oracle).max() < 1e-4


def random_instance(seed):
    r = np.random.default_rng(seed)
    s = int(r.integers(1, 4))
    n = int(r.integers(max(8, 2 * s + 2), 16))
    p = int(r.integers(2 * s, min(n - 1, 2 * s + 3) + 1))
    F = r.standard_normal((p, n))
    x0 = np.zeros(n)
    x0[r.choice(n, s, replace=False)] = r.uniform(0.2, 2.0, s)
    return F, F @ x0, np.ones(n)


def test_support_matches_basis_enumeration():
    for seed in range(60):
        F, y, w = random_instance(seed)
        oracle = brute_force_lp(F, y, w)
        x = solve_weighted_l1(F, y, w, 0.0, 1e-9)
        assert support(x) == support(oracle, 1e-9), seed
        assert w @ x == pytest.approx(w @ oracle, rel=1e-6)


def test_weighted_objective_matches_enumeration():
    r = np.random.default_rng(3)
    for _ in range(10):
        F = r.standard_normal((4, 9))
        y = F @ np.abs(r.standard_normal(9))
        w = r.uniform(0, 2, 9)
        oracle = brute_force_lp(F, y, w)
        x = solve_weighted_l1(F, y, w, 0.0, 1e-9)
        assert w @ x == pytest.approx(w @ oracle, rel=1e-6, abs=1e-9)


def test_noise_ball_matches_independent_solver():
    cp = pytest.importorskip("cvxpy")
    r = np.random.default_rng(11)
    F = r.standard_normal((10, 25))
    x0 = np.zeros(25)
    x0[[4, 17]] = [1.0, 0.3]
    y = F @ x0 + 0.01 * r.standard_normal(10)
    budget = 0.05
    x = cp.Variable(25, nonneg=True)
    cp.Problem(cp.Minimize(cp.sum(x)), [cp.norm(F @ x - y) <= budget]).solve(solver="SCS", eps=1e-9)
    ours = solve_weighted_l1(F, y, np.ones(25), budget, 1e-9)
    assert ours.sum() == pytest.approx(x.value.sum(), rel=1e-4)
    assert support(ours, 1e-3) == support(np.maximum(x.value, 0), 1e-3)
    assert set(np.argsort(ours)[-2:]) == {4, 17}


@given(seed=st.integers(0, 10_000), budget=st.floats(0, 0.5), tol=st.sampled_from([1e-9, 1e-6, 1e-3]))
def test_constraint_always_satisfied(seed, budget, tol):
    r = np.random.default_rng(seed)
    F = r.standard_normal((6, 20))
    y = F @ (np.abs(r.standard_normal(20)) * (r.random(20) < 0.2)) + 0.05 * r.standard_normal(6)
    w = r.uniform(0, 1, 20)
    try:
        x = solve_weighted_l1(F, y, w, budget, tol)
    except InfeasibleError:
        return
    assert (x >= 0).all()
    radius = max(budget, tol * np.linalg.norm(y))
    assert np.linalg.norm(F @ x - y) <= radius * (1 + 1e-9) + 1e-12


def test_zeroing_weights_never_increases_optimum():
    r = np.random.default_rng(5)
    for _ in range(10):
        F = r.standard_normal((8, 20))
        x0 = np.zeros(20)
        x0[r.choice(20, 3, replace=False)] = r.uniform(0.5, 2, 3)
        y = F @ x0
        w = np.ones(20)
        w2 = w.copy()
        w2[r.choice(20, 4, replace=False)] = 0.0
        a = solve_weighted_l1(F, y, w, 0.0, 1e-9)
        b = solve_weighted_l1(F, y, w2, 0.0, 1e-9)
        assert w2 @ b <= w @ a + 1e-7


def test_infeasible_reports_best_residual():
    with pytest.raises(InfeasibleError) as info:
        solve_weighted_l1(np.array([[1.0, 1.0]]), np.array([-1.0]), np.ones(2), 0.0, 1e-9)
    assert info.value.best_residual == pytest.approx(1.0, rel=1e-6)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        solve_weighted_l1(np.eye(2), np.ones(2), np.array([1.0, -1.0]))


class TestDetect:
    def test_zero(self):
        assert detect_from_columns(np.zeros((5, 3))) == set()

    def test_single_dominant_entry(self):
        X = np.full((6, 1), 1e-10)
        X[3, 0] = 7.0
        assert detect_from_columns(X, JointSparseParams(magnitude_ratio=0.5)) == {3}

    def test_dense_column_excluded(self):
        X = np.zeros((10, 4))
        X[2, :3] = [5.0, 2.0, 9.0]
        X[6, 0] = 0.8 * 5.0
        X[4, 1] = 0.1
        junk = np.full(10, 0.5)
        junk[7] = 3.0
        junk[2] = 0.0
        X[:, 3] = junk  # support 9 > cap
        params = JointSparseParams(magnitude_ratio=0.85, sparsity_cap=4)
        assert detect_from_columns(X, params) == {2}

    @given(seed=st.integers(0, 10_000), c=st.floats(1e-6, 1e6))
    def test_scale_invariant(self, seed, c):
        r = np.random.default_rng(seed)
        X = np.abs(r.standard_normal((12, 5))) * (r.random((12, 5)) < 0.3)
        params = JointSparseParams(sparsity_cap=3)
        assert detect_from_columns(c * X, params) == detect_from_columns(X, params)


def test_reconstruct_zero_measurements():
    F = np.random.default_rng(0).standard_normal((10, 30))
    sol = reconstruct(F, np.zeros((10, 4)))
    assert sol.detected == set()
    assert not sol.X.any()
    assert sol.outer_iterations == 1


def test_reconstruct_dimension_mismatch():
    with pytest.raises(ValueError):
        reconstruct(np.ones((4, 9)), np.ones((5, 2)))


def test_exact_single_user_pipeline():
    cfg = ModelConfig(n_channels=100, n_crs=20, n_reports=40, n_primary=1)
    for seed in range(100):
        scn = generate_scenario(cfg, seed=seed)
        sol = reconstruct(scn.filters, build_measurements(scn))
        assert sol.detected == set(scn.occupied), seed


def test_exact_three_users_within_five_iterations():
    cfg = ModelConfig(n_primary=3)
    for seed in range(20):
        scn = generate_scenario(cfg, seed=seed)
        sol = reconstruct(scn.filters, build_measurements(scn))
        assert sol.detected >= set(scn.occupied), seed
        assert sol.outer_iterations <= 5
        # weights only ever drop to zero, and exactly on detected channels
        zero_sets = [set(np.flatnonzero(w == 0)) for w in sol.weight_history]
        assert all(a <= b for a, b in zip(zero_sets, zero_sets[1:]))
        assert zero_sets[-1] == sol.detected


def test_solution_serializes():
    import json

    scn = generate_scenario(ModelConfig(n_primary=2, seed=1))
    d = reconstruct(scn.filters, build_measurements(scn)).to_dict()
    json.dumps(d)
    assert d["detected"] == sorted(d["detected"])
