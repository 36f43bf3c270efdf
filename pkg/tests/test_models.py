"""Model family tests against independent oracles.

Oracles used here:
  * least squares via numpy.linalg.lstsq (LASSO at lam=0, linear baselines)
  * explicit KKT residuals for the L1 problem
  * a zooming brute-force grid over the SVR dual feasible set
  * central finite differences for MLP gradients
  * a naive exhaustive split enumerator re-implementing boosting from scratch
"""

import math

import numpy as np
import pytest

from farmcast.models import (
    GbrtModel,
    LassoModel,
    MlpModel,
    SvrModel,
    dual_objective,
    forward,
    init_parameters,
    known_families,
    lambda_max,
    lasso_objective,
    load_model,
    loss_and_gradients,
    model_document,
    mse_loss,
    predict,
    rbf_kernel,
    register_family,
    save_model,
    train,
    train_gbrt,
    train_lasso,
    train_mlp,
    train_svr,
)
from farmcast.models.gbrt import TreeNode, tree_predict


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def least_squares_fit(X, y):
    """Ordinary least squares with intercept, solved by lstsq."""
    design = np.column_stack([X, np.ones(len(y))])
    sol = np.linalg.lstsq(design, y, rcond=None)[0]
    return sol[:-1], float(sol[-1])


def lasso_kkt_violation(X, y, coef, intercept, lam):
    """Largest violation of the subgradient optimality conditions."""
    n = len(y)
    resid = y - intercept - X @ coef
    worst = abs(float(resid.mean()))  # intercept stationarity
    grad = -(X.T @ resid) / n
    for j, w in enumerate(coef):
        g = float(grad[j])
        if w > 0:
            worst = max(worst, abs(g + lam))
        elif w < 0:
            worst = max(worst, abs(g - lam))
        else:
            worst = max(worst, max(0.0, abs(g) - lam))
    return worst


def svr_dual_grid_optimum(K, y, C, epsilon, rounds=7, points=11):
    """Brute-force maximum of the dual on {sum(beta)=0, |beta|<=C}.

    Grids the first n-1 coordinates and eliminates the last through the
    equality constraint; the window zooms in around the incumbent each
    round. Valid because the dual is concave, so the maximizer always
    stays near the best grid point.
    """
    n = len(y)
    center = np.zeros(n - 1)
    half = C
    best_val = -np.inf
    best = None
    for _ in range(rounds):
        axes = [
            np.clip(np.linspace(c - half, c + half, points), -C, C)
            for c in center
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        free = np.column_stack([m.ravel() for m in mesh])
        last = -free.sum(axis=1)
        ok = np.abs(last) <= C
        betas = np.column_stack([free[ok], last[ok]])
        values = (
            betas @ y
            - epsilon * np.abs(betas).sum(axis=1)
            - 0.5 * np.einsum("ij,jk,ik->i", betas, K, betas)
        )
        k = int(np.argmax(values))
        if values[k] > best_val:
            best_val = float(values[k])
            best = betas[k]
        center = best[:-1]
        half /= 3.0
    return best_val, best


def numeric_gradients(weights, biases, activation, X, y, h=1e-5):
    """Central finite differences of the MSE loss in every parameter."""
    grad_w = [np.zeros_like(w) for w in weights]
    grad_b = [np.zeros_like(b) for b in biases]
    for arrs, grads in ((weights, grad_w), (biases, grad_b)):
        for arr, grad in zip(arrs, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for k in range(flat.size):
                keep = flat[k]
                flat[k] = keep + h
                up = mse_loss(weights, biases, activation, X, y)
                flat[k] = keep - h
                down = mse_loss(weights, biases, activation, X, y)
                flat[k] = keep
                gflat[k] = (up - down) / (2.0 * h)
    return grad_w, grad_b


def exhaustive_best_split(X, residual, idx, min_leaf):
    """All (feature, midpoint) candidates by direct summation; strict
    improvement over the unsplit node, lowest feature then lowest
    threshold on ties. Mirrors the production tie-break on purpose."""
    m = idx.size
    total = float(residual[idx].sum())
    baseline = total * total / m
    best = None
    for j in range(X.shape[1]):
        values = np.sort(X[idx, j])
        for a, b in zip(values, values[1:]):
            if b <= a:
                continue
            threshold = 0.5 * (float(a) + float(b))
            left = idx[X[idx, j] <= threshold]
            if left.size < min_leaf or m - left.size < min_leaf:
                continue
            ls = float(residual[left].sum())
            score = ls * ls / left.size + (total - ls) ** 2 / (m - left.size)
            if score > baseline and (best is None or score > best[2]):
                best = (j, threshold, score)
    return best


def exhaustive_tree(X, residual, idx, depth, min_leaf):
    split = None
    if depth > 0 and idx.size >= 2 * min_leaf:
        split = exhaustive_best_split(X, residual, idx, min_leaf)
    if split is None:
        return {"value": float(residual[idx].mean())}
    j, threshold, _ = split
    mask = X[idx, j] <= threshold
    return {
        "feature": j,
        "threshold": threshold,
        "left": exhaustive_tree(X, residual, idx[mask], depth - 1, min_leaf),
        "right": exhaustive_tree(X, residual, idx[~mask], depth - 1, min_leaf),
    }


def exhaustive_gbrt_trees(X, y, n_trees, max_depth, learning_rate, min_leaf=1):
    idx = np.arange(len(y))
    pred = np.full(len(y), y.mean())
    out = []
    for _ in range(n_trees):
        tree = exhaustive_tree(X, y - pred, idx, max_depth, min_leaf)
        out.append(tree)
        pred += learning_rate * tree_predict(TreeNode.from_dict(tree), X)
    return out


# ---------------------------------------------------------------------------
# LASSO
# ---------------------------------------------------------------------------

class TestLasso:
    def test_zero_penalty_matches_least_squares(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(60, 4))
        y = X @ np.array([1.5, -2.0, 0.0, 0.7]) + 3.0 + 0.05 * rng.normal(size=60)
        model = train_lasso(X, y, lam=0.0, tol=1e-13, max_iter=20000)
        coef, intercept = least_squares_fit(X, y)
        assert np.max(np.abs(model.coef - coef)) < 1e-6
        assert abs(model.intercept - intercept) < 1e-6

    def test_lambda_max_kills_every_coefficient(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(80, 6))
        y = X @ rng.normal(size=6) + 1.0
        lam_star = lambda_max(X, y)
        dead = train_lasso(X, y, lam=lam_star)
        assert np.all(dead.coef == 0.0)
        assert abs(dead.intercept - y.mean()) < 1e-12
        alive = train_lasso(X, y, lam=0.98 * lam_star, tol=1e-12)
        assert np.any(alive.coef != 0.0)

    @pytest.mark.parametrize("lam", [1e-4, 1e-3, 1e-2, 1e-1])
    def test_kkt_conditions_hold_at_solution(self, lam):
        rng = np.random.default_rng(int(lam * 1e5) + 1)
        X = rng.normal(size=(100, 8))
        y = X @ np.array([2.0, -1.0, 0.5, 0, 0, 0, 0, 0]) + rng.normal(size=100) * 0.1
        model = train_lasso(X, y, lam=lam, tol=1e-12, max_iter=50000)
        assert model.info.converged
        assert lasso_kkt_violation(X, y, model.coef, model.intercept, lam) < 1e-6

    def test_sparse_support_recovery(self):
        rng = np.random.default_rng(42)
        X = rng.normal(size=(200, 10))
        truth = np.zeros(10)
        truth[2] = 3.0
        truth[7] = -2.0
        y = X @ truth
        model = train_lasso(X, y, lam=1e-2, tol=1e-12, max_iter=50000)
        support = set(np.flatnonzero(model.coef != 0.0))
        assert support == {2, 7}
        assert np.max(np.abs(model.coef - truth)) < 0.05

    def test_shrinkage_path_is_monotone(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(50, 5))
        y = X @ rng.normal(size=5) + rng.normal(size=50)
        norms = []
        for lam in np.geomspace(1e-4, 1.0, 12):
            model = train_lasso(X, y, lam=float(lam), tol=1e-10, max_iter=20000)
            norms.append(float(np.sum(np.abs(model.coef))))
        diffs = np.diff(norms)
        assert np.all(diffs <= 1e-9)

    def test_constant_column_gets_zero_weight(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 3))
        X[:, 1] = 7.0
        y = 2.0 * X[:, 0] + 1.0
        model = train_lasso(X, y, lam=1e-4, tol=1e-12)
        assert model.coef[1] == 0.0
        assert np.all(np.isfinite(model.coef))

    def test_intercept_is_unpenalized(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 2))
        y = np.full(30, 5.0) + 0.01 * rng.normal(size=30)
        model = train_lasso(X, y, lam=10.0)
        assert np.all(model.coef == 0.0)
        assert abs(model.intercept - y.mean()) < 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        a = train_lasso(X, y, lam=1e-3)
        b = train_lasso(X, y, lam=1e-3)
        assert np.array_equal(a.coef, b.coef)
        assert a.intercept == b.intercept

    def test_objective_beats_naive_candidates(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 5))
        y = rng.normal(size=60)
        lam = 0.05
        model = train_lasso(X, y, lam=lam, tol=1e-10, max_iter=20000)
        value = lasso_objective(X, y, model.coef, model.intercept, lam)
        zero = lasso_objective(X, y, np.zeros(5), float(y.mean()), lam)
        ls_coef, ls_int = least_squares_fit(X, y)
        ls = lasso_objective(X, y, ls_coef, ls_int, lam)
        assert value <= zero + 1e-12
        assert value <= ls + 1e-12

    def test_invalid_arguments(self):
        X = np.ones((4, 1))
        y = np.ones(4)
        with pytest.raises(ValueError):
            train_lasso(X, y, lam=-0.1)
        with pytest.raises(ValueError):
            train_lasso(X, y, lam=math.nan)
        with pytest.raises(ValueError):
            train_lasso(X, y, tol=0.0)
        with pytest.raises(ValueError):
            train_lasso(X, y, max_iter=0)

    def test_serialization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        model = train_lasso(X, y, lam=1e-3)
        path = tmp_path / "lasso.json"
        save_model(model, path)
        back = load_model(path)
        assert isinstance(back, LassoModel)
        assert np.array_equal(back.predict(X), model.predict(X))
        assert back.info.hyperparams == model.info.hyperparams


# ---------------------------------------------------------------------------
# SVR
# ---------------------------------------------------------------------------

class TestRbfKernel:
    def test_known_value(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[3.0, 4.0]])
        assert np.isclose(rbf_kernel(a, b, gamma=0.1)[0, 0], math.exp(-0.1 * 25.0))

    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(12, 3))
        K = rbf_kernel(X, X, gamma=0.7)
        assert np.allclose(K, K.T)
        assert np.allclose(np.diag(K), 1.0)
        assert np.all(K > 0.0) and np.all(K <= 1.0)

    def test_rectangular_shape(self):
        rng = np.random.default_rng(1)
        K = rbf_kernel(rng.normal(size=(5, 2)), rng.normal(size=(8, 2)), gamma=1.0)
        assert K.shape == (5, 8)


class TestSvr:
    def _full_beta(self, model, X):
        beta = np.zeros(len(X))
        for sv, coef in zip(model.support_vectors, model.dual_coef):
            hits = np.flatnonzero(np.all(X == sv, axis=1))
            assert hits.size == 1
            beta[hits[0]] = coef
        return beta

    def test_dual_matches_brute_force_grid(self):
        X = np.array([[0.0], [0.9], [2.1], [3.0]])
        y = np.array([0.3, 0.9, -0.4, 0.5])
        C, epsilon, gamma = 1.0, 0.1, 0.5
        model = train_svr(X, y, C=C, epsilon=epsilon, gamma=gamma, tol=1e-8, max_iter=2000)
        assert model.info.converged
        K = rbf_kernel(X, X, gamma)
        beta = self._full_beta(model, X)
        ours = dual_objective(beta, K, y, epsilon)
        grid_val, _ = svr_dual_grid_optimum(K, y, C, epsilon)
        assert abs(ours - grid_val) <= 1e-4
        assert ours >= 0.0  # beta = 0 is feasible with value 0

    def test_dual_matches_grid_when_box_binds(self):
        X = np.array([[0.0], [1.0], [2.0], [3.5]])
        y = np.array([2.0, -1.5, 1.0, -2.0])
        C, epsilon, gamma = 0.5, 0.05, 0.8
        model = train_svr(X, y, C=C, epsilon=epsilon, gamma=gamma, tol=1e-8, max_iter=2000)
        K = rbf_kernel(X, X, gamma)
        beta = self._full_beta(model, X)
        ours = dual_objective(beta, K, y, epsilon)
        grid_val, _ = svr_dual_grid_optimum(K, y, C, epsilon)
        assert abs(ours - grid_val) <= 1e-4
        assert np.max(np.abs(beta)) <= C + 1e-12

    def test_wide_tube_needs_no_support_vectors(self):
        X = np.linspace(0, 1, 10).reshape(-1, 1)
        y = np.linspace(0.4, 0.6, 10)
        model = train_svr(X, y, epsilon=0.5)
        assert model.dual_coef.size == 0
        assert model.info.n_iter == 0
        assert np.isclose(model.bias, 0.5)
        assert np.allclose(model.predict(X), 0.5)

    def test_equality_constraint_holds(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(40, 2))
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=40)
        model = train_svr(X, y, C=2.0, epsilon=0.05, gamma=0.5)
        assert abs(float(np.sum(model.dual_coef))) < 1e-9

    def test_objective_trace_non_decreasing(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 6, size=(50, 1))
        y = np.sin(X[:, 0])
        model = train_svr(X, y, C=5.0, epsilon=0.05, gamma=1.0, max_iter=100)
        trace = np.asarray(model.info.trace)
        assert trace[0] == 0.0
        assert np.all(np.diff(trace) >= -1e-9)

    def test_fits_sine_better_than_constant(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 6, size=(50, 1))
        y = np.sin(X[:, 0])
        model = train_svr(X, y, C=10.0, epsilon=0.01, gamma=1.0, max_iter=500)
        mse = float(np.mean((model.predict(X) - y) ** 2))
        assert mse < 0.1 * float(np.var(y))

    def test_support_vectors_sit_on_or_outside_tube(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 6, size=(40, 1))
        y = np.sin(X[:, 0]) + 0.05 * rng.normal(size=40)
        epsilon = 0.1
        model = train_svr(X, y, C=5.0, epsilon=epsilon, gamma=1.0, tol=1e-8, max_iter=2000)
        assert model.info.converged
        beta = self._full_beta(model, X)
        pred = model.predict(X)
        for i in np.flatnonzero(beta != 0.0):
            assert abs(y[i] - pred[i]) >= epsilon - 1e-4

    def test_prediction_formula(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        model = train_svr(X, y, C=1.0, epsilon=0.05, gamma=0.3)
        grid = rng.normal(size=(7, 2))
        manual = rbf_kernel(grid, model.support_vectors, 0.3) @ model.dual_coef + model.bias
        assert np.allclose(model.predict(grid), manual)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        a = train_svr(X, y, C=1.0, epsilon=0.1)
        b = train_svr(X, y, C=1.0, epsilon=0.1)
        assert np.array_equal(a.dual_coef, b.dual_coef)
        assert a.bias == b.bias

    def test_invalid_arguments(self):
        X = np.ones((4, 1))
        y = np.ones(4)
        with pytest.raises(ValueError):
            train_svr(X, y, C=0.0)
        with pytest.raises(ValueError):
            train_svr(X, y, epsilon=-0.1)
        with pytest.raises(ValueError):
            train_svr(X, y, gamma=0.0)
        with pytest.raises(ValueError):
            train_svr(X, y, max_iter=0)

    def test_serialization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(25, 2))
        y = np.sin(X[:, 0])
        model = train_svr(X, y, C=2.0, epsilon=0.05, gamma=0.4)
        path = tmp_path / "svr.json"
        save_model(model, path)
        back = load_model(path)
        assert isinstance(back, SvrModel)
        assert np.allclose(back.predict(X), model.predict(X), rtol=0, atol=1e-15)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

class TestMlp:
    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_gradients_match_finite_differences(self, activation):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(10, 3))
        y = rng.normal(size=10)
        weights, biases = init_parameters([3, 4, 1], rng)
        _, grad_w, grad_b = loss_and_gradients(weights, biases, activation, X, y)
        num_w, num_b = numeric_gradients(weights, biases, activation, X, y)
        worst = 0.0
        for ana, num in zip(grad_w + grad_b, num_w + num_b):
            denom = np.maximum(np.abs(ana) + np.abs(num), 1e-8)
            worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
        assert worst < 1e-4

    def test_gradcheck_two_hidden_layers(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(8, 2))
        y = rng.normal(size=8)
        weights, biases = init_parameters([2, 5, 3, 1], rng)
        _, grad_w, grad_b = loss_and_gradients(weights, biases, "tanh", X, y)
        num_w, num_b = numeric_gradients(weights, biases, "tanh", X, y)
        for ana, num in zip(grad_w + grad_b, num_w + num_b):
            assert np.max(np.abs(ana - num)) < 1e-7

    def test_zero_network_zero_targets(self):
        weights = [np.zeros((2, 3)), np.zeros((3, 1))]
        biases = [np.zeros(3), np.zeros(1)]
        X = np.ones((5, 2))
        y = np.zeros(5)
        assert mse_loss(weights, biases, "tanh", X, y) == 0.0

    def test_trace_starts_at_untrained_loss(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        model = train_mlp(X, y, hidden_sizes=(6,), epochs=5, seed=99)
        init_rng = np.random.default_rng(99)
        weights, biases = init_parameters([2, 6, 1], init_rng)
        assert model.info.trace[0] == mse_loss(weights, biases, "tanh", X, y)
        assert len(model.info.trace) == 6

    def test_zero_epochs_returns_initial_network(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        model = train_mlp(X, y, hidden_sizes=(4,), epochs=0, seed=5)
        init_rng = np.random.default_rng(5)
        weights, biases = init_parameters([2, 4, 1], init_rng)
        assert all(np.array_equal(a, b) for a, b in zip(model.weights, weights))
        assert model.info.final_train_loss == model.info.trace[0]

    def test_learns_nonlinear_target(self):
        rng = np.random.default_rng(16)
        base = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        X = np.tile(base, (25, 1)) + 0.05 * rng.normal(size=(100, 2))
        y = np.logical_xor(X[:, 0] > 0.5, X[:, 1] > 0.5).astype(float)
        model = train_mlp(
            X, y, hidden_sizes=(16,), learning_rate=0.05, epochs=400, seed=1
        )
        mlp_mse = float(np.mean((model.predict(X) - y) ** 2))
        coef, intercept = least_squares_fit(X, y)
        linear_mse = float(np.mean((X @ coef + intercept - y) ** 2))
        assert mlp_mse < 0.5 * linear_mse

    def test_empty_hidden_behaves_linearly(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(80, 3))
        y = X @ np.array([1.0, -0.5, 2.0]) + 0.3
        model = train_mlp(
            X, y, hidden_sizes=(), learning_rate=0.05, epochs=300, batch_size=80, seed=2
        )
        assert len(model.weights) == 1
        assert float(np.mean((model.predict(X) - y) ** 2)) < 1e-4

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        a = train_mlp(X, y, hidden_sizes=(8,), epochs=10, seed=3)
        b = train_mlp(X, y, hidden_sizes=(8,), epochs=10, seed=3)
        assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
        assert all(np.array_equal(u, v) for u, v in zip(a.biases, b.biases))
        c = train_mlp(X, y, hidden_sizes=(8,), epochs=10, seed=4)
        assert any(not np.array_equal(u, v) for u, v in zip(a.weights, c.weights))

    def test_divergence_raises_with_epoch(self):
        rng = np.random.default_rng(19)
        X = 100.0 * rng.normal(size=(40, 2))
        y = 100.0 * rng.normal(size=40)
        with np.errstate(over="ignore"), pytest.raises(RuntimeError, match="epoch"):
            train_mlp(X, y, hidden_sizes=(8,), learning_rate=10.0, epochs=50, seed=0)

    def test_feature_width_checked_on_predict(self):
        rng = np.random.default_rng(20)
        X = rng.normal(size=(10, 3))
        y = rng.normal(size=10)
        model = train_mlp(X, y, hidden_sizes=(4,), epochs=1, seed=0)
        with pytest.raises(ValueError):
            model.predict(np.ones((5, 2)))

    def test_invalid_arguments(self):
        X = np.ones((4, 2))
        y = np.ones(4)
        with pytest.raises(ValueError):
            train_mlp(X, y, activation="sigmoid")
        with pytest.raises(ValueError):
            train_mlp(X, y, hidden_sizes=(0,))
        with pytest.raises(ValueError):
            train_mlp(X, y, learning_rate=0.0)
        with pytest.raises(ValueError):
            train_mlp(X, y, epochs=-1)
        with pytest.raises(ValueError):
            train_mlp(X, y, batch_size=0)

    def test_serialization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        model = train_mlp(X, y, hidden_sizes=(5,), epochs=10, seed=6)
        path = tmp_path / "mlp.json"
        save_model(model, path)
        back = load_model(path)
        assert isinstance(back, MlpModel)
        assert np.array_equal(back.predict(X), model.predict(X))


# ---------------------------------------------------------------------------
# GBRT
# ---------------------------------------------------------------------------

class TestGbrt:
    def test_single_tree_fits_step_function(self):
        X = np.arange(8, dtype=float).reshape(-1, 1)
        y = np.where(X[:, 0] < 4, -1.0, 1.0)
        model = train_gbrt(X, y, n_trees=1, max_depth=1, learning_rate=1.0)
        assert model.info.trace[0] == pytest.approx(float(np.var(y)))
        assert float(np.mean((model.predict(X) - y) ** 2)) < 1e-20
        root = model.trees[0]
        assert root.feature == 0 and root.threshold == pytest.approx(3.5)

    def test_deep_trees_interpolate_at_unit_rate(self):
        rng = np.random.default_rng(22)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = train_gbrt(X, y, n_trees=40, max_depth=8, learning_rate=1.0)
        assert float(np.mean((model.predict(X) - y) ** 2)) < 1e-10

    @staticmethod
    def _same_tree(got: dict, want: dict) -> bool:
        """Splits must be identical; leaf values may differ by summation
        order (the fast path sums residuals in feature-sorted order)."""
        if ("value" in got) != ("value" in want):
            return False
        if "value" in got:
            return bool(np.isclose(got["value"], want["value"], rtol=1e-12, atol=1e-15))
        return (
            got["feature"] == want["feature"]
            and got["threshold"] == want["threshold"]
            and TestGbrt._same_tree(got["left"], want["left"])
            and TestGbrt._same_tree(got["right"], want["right"])
        )

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        # dyadic values keep the split scores exact, so both scorers must
        # rank every candidate identically, ties included
        X = rng.integers(0, 16, size=(8, 3)).astype(float) / 16.0
        y = rng.integers(-8, 9, size=8).astype(float) / 8.0
        model = train_gbrt(X, y, n_trees=3, max_depth=2, learning_rate=0.5)
        expected = exhaustive_gbrt_trees(X, y, n_trees=3, max_depth=2, learning_rate=0.5)
        for tree, want in zip(model.trees, expected):
            assert self._same_tree(tree.to_dict(), want)

    def test_trace_non_increasing_over_many_trees(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(120, 3))
        y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=120)
        model = train_gbrt(X, y, n_trees=300, max_depth=3, learning_rate=0.1)
        trace = np.asarray(model.info.trace)
        assert trace.size == 301
        assert np.all(np.diff(trace) <= 1e-12)

    def test_min_leaf_blocks_splitting(self):
        rng = np.random.default_rng(24)
        X = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        model = train_gbrt(X, y, n_trees=3, max_depth=4, min_leaf=6)
        assert all(tree.is_leaf for tree in model.trees)
        assert np.allclose(model.predict(X), y.mean())

    def test_min_leaf_respected_in_every_leaf(self):
        rng = np.random.default_rng(25)
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        min_leaf = 5
        model = train_gbrt(X, y, n_trees=5, max_depth=3, min_leaf=min_leaf)

        def leaf_counts(node, rows):
            if node.is_leaf:
                return [rows.size]
            mask = X[rows, node.feature] <= node.threshold
            return leaf_counts(node.left, rows[mask]) + leaf_counts(
                node.right, rows[~mask]
            )

        for tree in model.trees:
            assert min(leaf_counts(tree, np.arange(40))) >= min_leaf

    def test_tie_breaks_to_lowest_feature(self):
        X = np.column_stack([np.arange(8.0), np.arange(8.0)])
        y = np.where(X[:, 0] < 4, 0.0, 1.0)
        model = train_gbrt(X, y, n_trees=1, max_depth=1)
        assert model.trees[0].feature == 0

    def test_constant_target_never_splits(self):
        rng = np.random.default_rng(26)
        X = rng.normal(size=(20, 2))
        y = np.full(20, 3.25)
        model = train_gbrt(X, y, n_trees=2, max_depth=3)
        assert all(tree.is_leaf for tree in model.trees)
        assert np.allclose(model.predict(X), 3.25)

    def test_invalid_arguments(self):
        X = np.ones((6, 1))
        y = np.ones(6)
        with pytest.raises(ValueError):
            train_gbrt(X, y, n_trees=0)
        with pytest.raises(ValueError):
            train_gbrt(X, y, max_depth=0)
        with pytest.raises(ValueError):
            train_gbrt(X, y, learning_rate=0.0)
        with pytest.raises(ValueError):
            train_gbrt(X, y, learning_rate=1.5)
        with pytest.raises(ValueError):
            train_gbrt(X, y, min_leaf=7)

    def test_serialization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(27)
        X = rng.normal(size=(30, 2))
        y = np.sin(X[:, 0])
        model = train_gbrt(X, y, n_trees=10, max_depth=3)
        path = tmp_path / "gbrt.json"
        save_model(model, path)
        back = load_model(path)
        assert isinstance(back, GbrtModel)
        assert np.array_equal(back.predict(X), model.predict(X))

    def test_deterministic(self):
        rng = np.random.default_rng(28)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        a = train_gbrt(X, y, n_trees=5)
        b = train_gbrt(X, y, n_trees=5)
        assert np.array_equal(a.predict(X), b.predict(X))


# ---------------------------------------------------------------------------
# registry and dispatch
# ---------------------------------------------------------------------------

class TestRegistry:
    def test_all_families_registered(self):
        assert set(known_families()) >= {"GBRT", "LASSO", "MLP", "SVR"}

    def test_train_dispatch(self):
        rng = np.random.default_rng(29)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        model = train("LASSO", X, y, {"lam": 1e-3}, seed=0)
        assert isinstance(model, LassoModel)
        assert np.array_equal(predict(model, X), model.predict(X))

    def test_seed_only_affects_stochastic_trainers(self):
        rng = np.random.default_rng(30)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        a = train("GBRT", X, y, {"n_trees": 3}, seed=1)
        b = train("GBRT", X, y, {"n_trees": 3}, seed=2)
        assert np.array_equal(a.predict(X), b.predict(X))
        m1 = train("MLP", X, y, {"epochs": 3}, seed=1)
        m2 = train("MLP", X, y, {"epochs": 3}, seed=2)
        assert not np.array_equal(m1.predict(X), m2.predict(X))

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="unknown model family"):
            train("TREES", np.ones((3, 1)), np.ones(3), {}, seed=0)

    def test_family_tag_must_be_upper_case(self):
        with pytest.raises(ValueError):
            register_family("lasso", lambda X, y, p, s: None, LassoModel)
        with pytest.raises(ValueError):
            register_family("", lambda X, y, p, s: None, LassoModel)

    def test_custom_family_registration(self):
        class MeanModel:
            family = "MEAN"

            def __init__(self, value):
                self.value = value

            def predict(self, X):
                return np.full(len(X), self.value)

            def to_dict(self):
                return {"value": self.value}

        register_family(
            "MEAN", lambda X, y, params, seed: MeanModel(float(y.mean())), MeanModel
        )
        model = train("MEAN", np.ones((4, 1)), np.array([1.0, 2.0, 3.0, 4.0]), {}, 0)
        assert np.allclose(model.predict(np.ones((2, 1))), 2.5)

    def test_document_shape(self):
        model = train_lasso(np.ones((4, 2)) * np.arange(4).reshape(-1, 1), np.arange(4.0))
        doc = model_document(model)
        assert doc["format_version"] == 1
        assert doc["family"] == "LASSO"
        assert "coef" in doc["model"]

    def test_load_rejects_bad_version(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 99, "family": "LASSO", "model": {}}')
        with pytest.raises(ValueError, match="version"):
            load_model(path)

    def test_load_rejects_unknown_family(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 1, "family": "NOPE", "model": {}}')
        with pytest.raises(ValueError, match="family"):
            load_model(path)

    def test_training_input_validation(self):
        with pytest.raises(ValueError):
            train_lasso(np.ones(4), np.ones(4))  # 1-d X
        with pytest.raises(ValueError):
            train_lasso(np.ones((4, 2)), np.ones(5))
        with pytest.raises(ValueError):
            train_lasso(np.full((4, 2), np.nan), np.ones(4))
        with pytest.raises(ValueError):
            train_lasso(np.ones((0, 2)), np.ones(0))
