import math

import numpy as np
import pytest

from mtl21.core import MultiTaskDataset, WeightMatrix
from mtl21.dual import lambda_max
from mtl21.errors import (
    MaxItersExceeded,
    NonPositiveLambda,
    NonPositiveRho,
    NonPositiveWeight,
)
from mtl21.solver import (
    FitResult,
    SolverConfig,
    duality_gap,
    fit,
    frobenius_objective,
    kkt_residual,
    l21_norm,
    objective,
    reduce_frobenius,
    reduce_weighted,
    weighted_objective,
)


def hand_dataset():
    # orthogonal columns make every optimum available in closed form
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    y = np.array([2.0, 0.0])
    return MultiTaskDataset([(X, y)])


def random_dataset(rng, T=3, d=8, n=30):
    return MultiTaskDataset(
        [(rng.standard_normal((n, d)), rng.standard_normal(n)) for _ in range(T)]
    )


def cd_lasso(X, y, lam, sweeps=5000, tol=1e-14):
    """Cyclic coordinate descent for the single-task case.

    With one task the row norms are absolute values, so the model is the
    lasso and each coordinate has a closed-form soft-threshold update.
    """
    n, d = X.shape
    w = np.zeros(d)
    col_sq = np.einsum("ij,ij->j", X, X)
    r = y.copy()  # residual y - X w
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            rho_j = float(X[:, j] @ r) + col_sq[j] * w[j]
            new = math.copysign(max(abs(rho_j) - lam, 0.0), rho_j) / col_sq[j]
            if new != w[j]:
                r += X[:, j] * (w[j] - new)
                biggest = max(biggest, abs(new - w[j]))
                w[j] = new
        if biggest <= tol:
            break
    return w


class TestHandSolutions:
    def test_orthogonal_design(self):
        # separable problem: w1 = soft(2, 1), w2 = soft(0, ...) = 0
        ds = hand_dataset()
        res = fit(ds, 1.0, SolverConfig(kkt_tol=1e-12))
        w = res.weights.values[:, 0]
        assert res.converged
        assert math.isclose(w[0], 1.0, rel_tol=1e-10)
        assert w[1] == 0.0
        assert math.isclose(res.objective, 1.5, rel_tol=1e-12)
        assert math.isclose(objective(ds, res.weights, 1.0), 1.5, rel_tol=1e-12)

    def test_zero_above_threshold_level(self):
        ds = hand_dataset()
        lmax = lambda_max(ds)[0]
        assert lmax == 2.0
        for lam in (lmax, 1.5 * lmax):
            res = fit(ds, lam)
            assert res.converged
            assert res.n_iters == 1
            assert np.all(res.weights.values == 0.0)

    def test_nonzero_just_below_threshold(self):
        ds = hand_dataset()
        res = fit(ds, 0.99 * 2.0, SolverConfig(kkt_tol=1e-12))
        w = res.weights.values[:, 0]
        assert math.isclose(w[0], 0.02, rel_tol=1e-8)
        assert w[1] == 0.0


class TestSingleTaskOracle:
    def test_matches_coordinate_descent(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            ds = random_dataset(rng, T=1, d=8, n=30)
            lam = (0.2 + 0.15 * trial) * lambda_max(ds)[0]
            res = fit(ds, lam, SolverConfig(kkt_tol=1e-11, max_iters=50000))
            w_cd = cd_lasso(ds.X[0], ds.y[0], lam)
            w = res.weights.values[:, 0]
            assert np.max(np.abs(w - w_cd)) < 1e-7
            f_cd = 0.5 * float(
                np.sum((ds.y[0] - ds.X[0] @ w_cd) ** 2)
            ) + lam * float(np.abs(w_cd).sum())
            # neither solver may beat the other beyond rounding
            assert res.objective <= f_cd + 1e-10 * max(1.0, f_cd)
            assert f_cd <= res.objective + 1e-10 * max(1.0, res.objective)


class TestFitContract:
    def test_reported_fields_recompute(self):
        rng = np.random.default_rng(3)
        ds = random_dataset(rng, T=3, d=10, n=20)
        lam = 0.4 * lambda_max(ds)[0]
        res = fit(ds, lam, SolverConfig(kkt_tol=1e-10, max_iters=50000))
        assert isinstance(res, FitResult)
        assert res.converged
        assert res.kkt_residual <= 1e-10
        assert kkt_residual(ds, res.weights, lam) <= 2e-10
        assert math.isclose(
            res.objective, objective(ds, res.weights, lam), rel_tol=1e-12
        )
        assert res.n_iters >= 1
        assert res.wall_time >= 0.0
        assert res.objective_history == []

    def test_inactive_rows_are_exact_zeros(self):
        rng = np.random.default_rng(11)
        ds = random_dataset(rng, T=3, d=12, n=25)
        lam = 0.6 * lambda_max(ds)[0]
        res = fit(ds, lam, SolverConfig(kkt_tol=1e-10, max_iters=50000))
        rn = res.weights.row_norms()
        assert (rn == 0.0).any()
        assert (rn > 0.0).any()
        # no almost-zero rows: the proximal step stores hard zeros
        assert np.all((rn == 0.0) | (rn > 1e-8))

    def test_nonuniform_task_sizes(self):
        rng = np.random.default_rng(5)
        ds = MultiTaskDataset(
            [
                (rng.standard_normal((5, 6)), rng.standard_normal(5)),
                (rng.standard_normal((9, 6)), rng.standard_normal(9)),
            ]
        )
        lam = 0.3 * lambda_max(ds)[0]
        for rule in ("backtracking", "fixed"):
            res = fit(ds, lam, SolverConfig(kkt_tol=1e-10, step_rule=rule))
            assert res.converged
            assert kkt_residual(ds, res.weights, lam) <= 2e-10

    def test_step_rules_agree(self):
        rng = np.random.default_rng(13)
        ds = random_dataset(rng, T=2, d=8, n=30)
        lam = 0.35 * lambda_max(ds)[0]
        res_b = fit(ds, lam, SolverConfig(kkt_tol=1e-10, max_iters=50000))
        res_f = fit(
            ds, lam, SolverConfig(kkt_tol=1e-10, max_iters=50000, step_rule="fixed")
        )
        assert math.isclose(res_b.objective, res_f.objective, rel_tol=1e-10)
        assert np.max(np.abs(res_b.weights.values - res_f.weights.values)) < 1e-6

    def test_warm_start_resumes(self):
        rng = np.random.default_rng(17)
        ds = random_dataset(rng, T=2, d=10, n=25)
        lam = 0.4 * lambda_max(ds)[0]
        first = fit(ds, lam, SolverConfig(kkt_tol=1e-8, max_iters=50000))
        again = fit(ds, lam, SolverConfig(kkt_tol=1e-6, warm_start=first.weights))
        assert again.converged
        assert again.n_iters == 1
        # a raw array is accepted too
        raw = fit(
            ds, lam, SolverConfig(kkt_tol=1e-6, warm_start=first.weights.values)
        )
        assert raw.n_iters == 1

    def test_history(self):
        rng = np.random.default_rng(19)
        ds = random_dataset(rng, T=2, d=8, n=20)
        lam = 0.5 * lambda_max(ds)[0]
        res = fit(ds, lam, SolverConfig(kkt_tol=1e-8, keep_history=True))
        h = res.objective_history
        assert len(h) == res.n_iters + 1
        f0 = 0.5 * sum(float(np.dot(ds.y[t], ds.y[t])) for t in range(ds.T))
        assert math.isclose(h[0], f0, rel_tol=1e-12)
        assert math.isclose(h[-1], res.objective, rel_tol=1e-12)
        for a, b in zip(h, h[1:]):
            assert b <= a + 1e-9 * max(1.0, abs(a))

    def test_max_iters_payload(self):
        rng = np.random.default_rng(23)
        ds = random_dataset(rng, T=3, d=40, n=20)
        lam = 0.05 * lambda_max(ds)[0]
        with pytest.raises(MaxItersExceeded) as ei:
            fit(ds, lam, SolverConfig(max_iters=5, kkt_tol=1e-12))
        err = ei.value
        assert "5 iterations" in str(err)
        assert isinstance(err.weights, WeightMatrix)
        assert err.weights.values.shape == (40, 3)
        recomputed = kkt_residual(ds, err.weights, lam)
        assert math.isclose(err.residual, recomputed, rel_tol=1e-6)

    def test_bad_lambda(self):
        ds = hand_dataset()
        with pytest.raises(NonPositiveLambda):
            fit(ds, 0.0)
        with pytest.raises(NonPositiveLambda):
            fit(ds, -1.0)
        with pytest.raises(NonPositiveLambda):
            kkt_residual(ds, np.zeros((2, 1)), 0.0)
        with pytest.raises(NonPositiveLambda):
            duality_gap(ds, np.zeros((2, 1)), -2.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)
        with pytest.raises(ValueError):
            SolverConfig(kkt_tol=0.0)
        with pytest.raises(ValueError):
            SolverConfig(kkt_tol=float("nan"))
        with pytest.raises(ValueError):
            SolverConfig(step_rule="adam")


class TestDualityGap:
    def test_zero_gap_at_threshold(self):
        # at the all-zero level the induced dual point is itself optimal
        ds = hand_dataset()
        gap = duality_gap(ds, np.zeros((2, 1)), 2.0)
        assert abs(gap) <= 1e-15

    def test_gap_shrinks_with_tolerance(self):
        rng = np.random.default_rng(29)
        ds = random_dataset(rng, T=2, d=10, n=25)
        lam = 0.4 * lambda_max(ds)[0]
        rough = fit(ds, lam, SolverConfig(kkt_tol=1e-3))
        tight = fit(ds, lam, SolverConfig(kkt_tol=1e-10, max_iters=50000))
        g_rough = duality_gap(ds, rough.weights, lam)
        g_tight = duality_gap(ds, tight.weights, lam)
        assert g_rough >= -1e-12
        assert g_tight >= -1e-12
        assert g_tight <= 1e-6
        assert g_tight <= g_rough


class TestNorms:
    def test_l21_hand(self):
        assert l21_norm(np.array([[3.0, 4.0]])) == 5.0
        W = np.array([[3.0, 4.0], [0.0, 0.0], [5.0, 12.0]])
        assert l21_norm(W) == 18.0
        assert l21_norm(WeightMatrix(W)) == 18.0


class TestReductions:
    def test_weighted_identity(self):
        rng = np.random.default_rng(31)
        ds = random_dataset(rng, T=3, d=6, n=12)
        weights = rng.uniform(0.5, 2.0, size=3)
        red = reduce_weighted(ds, weights)
        assert red.T == ds.T and red.d == ds.d
        for t in range(ds.T):
            assert np.array_equal(red.X[t], ds.X[t] / np.sqrt(weights[t]))
        lam = 0.7
        for _ in range(20):
            W = rng.standard_normal((ds.d, ds.T))
            lhs = objective(red, W, lam)
            rhs = weighted_objective(ds, W, lam, weights)
            assert math.isclose(lhs, rhs, rel_tol=1e-12)

    def test_frobenius_identity(self):
        rng = np.random.default_rng(37)
        ds = random_dataset(rng, T=2, d=5, n=9)
        rho = 0.37
        red = reduce_frobenius(ds, rho)
        assert red.T == ds.T and red.d == ds.d
        assert red.n_per_task == tuple(n + ds.d for n in ds.n_per_task)
        lam = 0.9
        for _ in range(20):
            W = rng.standard_normal((ds.d, ds.T))
            lhs = objective(red, W, lam)
            rhs = frobenius_objective(ds, W, lam, rho)
            assert math.isclose(lhs, rhs, rel_tol=1e-12)

    def test_solving_reduced_problem(self):
        rng = np.random.default_rng(41)
        ds = random_dataset(rng, T=2, d=6, n=14)
        red = reduce_frobenius(ds, 0.2)
        lam = 0.3 * lambda_max(red)[0]
        res = fit(red, lam, SolverConfig(kkt_tol=1e-10))
        assert res.converged
        assert math.isclose(
            objective(red, res.weights, lam),
            frobenius_objective(ds, res.weights, lam, 0.2),
            rel_tol=1e-12,
        )

    def test_weighted_errors(self):
        ds = hand_dataset()
        with pytest.raises(NonPositiveWeight):
            reduce_weighted(ds, [1.0, 2.0])  # wrong length
        with pytest.raises(NonPositiveWeight):
            reduce_weighted(ds, [0.0])
        with pytest.raises(NonPositiveWeight):
            reduce_weighted(ds, [-1.0])

    def test_frobenius_errors(self):
        ds = hand_dataset()
        with pytest.raises(NonPositiveRho):
            reduce_frobenius(ds, 0.0)
        with pytest.raises(NonPositiveRho):
            reduce_frobenius(ds, -0.5)
