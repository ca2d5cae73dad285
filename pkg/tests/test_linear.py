import numpy as np
import pytest

from genopheno.errors import IndexOutOfRange, SingleClassTraining
from genopheno.linear import (
    LinearModel,
    fit_l1_linear,
    l1_objective,
    linear_predict_score,
    load_linear,
    logistic_gradient,
    logistic_loss,
    save_linear,
    sigmoid,
)
from genopheno.matrix import FeatureMatrix


def standardize(X):
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    s = X.std(axis=0)
    keep = s > 1e-9
    out = np.zeros_like(X)
    out[:, keep] = (X[:, keep] - mu[keep]) / s[keep]
    return out, mu, s, keep


def numerical_gradient(X, y, w, b, h=1e-6):
    """Central finite differences of the mean logistic loss."""
    X = np.asarray(X, dtype=float)
    gw = np.zeros(len(w))
    for j in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        gw[j] = (logistic_loss(X @ wp + b, y) - logistic_loss(X @ wm + b, y)) / (2 * h)
    gb = (logistic_loss(X @ w + b + h, y) - logistic_loss(X @ w + b - h, y)) / (2 * h)
    return gw, gb


class TestGradient:
    def test_matches_finite_differences(self, rng):
        for trial in range(20):
            n, p = int(rng.integers(4, 12)), int(rng.integers(1, 5))
            X = rng.normal(size=(n, p))
            y = rng.integers(0, 2, n)
            w = rng.normal(size=p)
            b = float(rng.normal())
            gw, gb = logistic_gradient(X, y, w, b)
            nw, nb = numerical_gradient(X, y, w, b)
            assert np.allclose(gw, nw, rtol=1e-5, atol=1e-7)
            assert gb == pytest.approx(nb, rel=1e-5, abs=1e-7)


class TestFitL1:
    def test_huge_lambda_gives_log_odds_intercept(self):
        y = [1] * 3 + [0] * 7
        X = np.arange(10).reshape(-1, 1)
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_l1_linear(m, lam=1e6, max_iters=500, tolerance=1e-10)
        assert np.count_nonzero(model.weights) == 0
        assert model.intercept == pytest.approx(np.log(3 / 7), abs=1e-6)

    def test_separable_weight_sign(self, rng):
        X = np.array([[0.0], [1.0], [0.0], [1.0], [0.0], [1.0]])
        y = [0, 1, 0, 1, 0, 1]
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_l1_linear(m, lam=0.0, max_iters=60, tolerance=1e-10)
        assert model.weights[0] > 0
        flipped = fit_l1_linear(FeatureMatrix.from_dense(X, labels=[1 - v for v in y]),
                                lam=0.0, max_iters=60, tolerance=1e-10)
        assert flipped.weights[0] < 0

    def test_duplicate_column_objective(self, rng):
        X = rng.integers(0, 3, (20, 3)).astype(float)
        X = np.column_stack([X, X[:, 0]])  # duplicate of column 0
        y = (X[:, 0] + rng.normal(scale=0.4, size=20) > 1.0).astype(int)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        lam = 0.05
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_l1_linear(m, lam=lam, max_iters=2000, tolerance=1e-10)
        # single-column reference: same fit with the duplicate zeroed out
        ref = fit_l1_linear(FeatureMatrix.from_dense(X[:, :3], labels=y),
                            lam=lam, max_iters=2000, tolerance=1e-10)
        # objectives in standardized space: loss + lam * ||w_std||_1
        Xs, _, s, keep = standardize(X)
        w_std = model.weights * np.where(keep, s, 1.0)
        obj = logistic_loss(X @ model.weights + model.intercept, y) + lam * np.abs(w_std).sum()
        Xs3, _, s3, keep3 = standardize(X[:, :3])
        w3_std = ref.weights * np.where(keep3, s3, 1.0)
        obj_ref = logistic_loss(X[:, :3] @ ref.weights + ref.intercept, y) + lam * np.abs(w3_std).sum()
        assert obj <= obj_ref + 1e-6

    def test_single_class_rejected(self):
        m = FeatureMatrix.from_dense([[0.0], [1.0]], labels=[1, 1])
        with pytest.raises(SingleClassTraining):
            fit_l1_linear(m, lam=0.1)

    def test_negative_lambda_rejected(self):
        m = FeatureMatrix.from_dense([[0.0], [1.0]], labels=[0, 1])
        with pytest.raises(ValueError):
            fit_l1_linear(m, lam=-1.0)

    def test_objective_non_increasing_per_sweep(self, rng):
        X = rng.integers(0, 4, (30, 8)).astype(float)
        y = (X[:, 2] > 1.5).astype(int)
        y[rng.integers(0, 30, 4)] ^= 1
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_l1_linear(m, lam=0.02, max_iters=300, tolerance=1e-10)
        hist = model.objective_history
        assert len(hist) >= 2
        for a, b in zip(hist[:-1], hist[1:]):
            assert b <= a + 1e-12

    def test_nonzeros_non_increasing_in_lambda(self, rng):
        X = rng.integers(0, 2, (40, 15)).astype(float)
        signal = X[:, 0] * 2 + X[:, 1] - X[:, 2]
        y = (signal + rng.normal(scale=0.5, size=40) > 1.0).astype(int)
        if len(np.unique(y)) < 2:
            y[0] ^= 1
        m = FeatureMatrix.from_dense(X, labels=y)
        nnz = []
        for lam in (0.001, 0.01, 0.1, 1.0, 10.0):
            model = fit_l1_linear(m, lam=lam, max_iters=2000, tolerance=1e-8)
            nnz.append(model.nonzero_count())
        assert nnz == sorted(nnz, reverse=True)

    def test_constant_column_skipped(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        m = FeatureMatrix.from_dense(X, labels=[0, 1, 0, 1])
        model = fit_l1_linear(m, lam=0.01, max_iters=200, tolerance=1e-10)
        assert model.weights[0] == 0.0
        assert model.weights[1] != 0.0

    def test_deterministic(self, rng):
        X = rng.integers(0, 3, (25, 6)).astype(float)
        y = (X[:, 1] > 1).astype(int)
        m = FeatureMatrix.from_dense(X, labels=y)
        a = fit_l1_linear(m, lam=0.01)
        b = fit_l1_linear(m, lam=0.01)
        assert np.array_equal(a.weights, b.weights)
        assert a.intercept == b.intercept


class TestPredict:
    def test_zero_model_scores_half(self):
        model = LinearModel(weights=np.zeros(3), intercept=0.0, lam=0.0)
        assert linear_predict_score(model, [0.0, 0.0, 0.0]) == 0.5

    def test_sigmoid_limits(self):
        model = LinearModel(weights=np.array([50.0]), intercept=0.0, lam=0.0)
        assert linear_predict_score(model, [10.0]) == pytest.approx(1.0, abs=1e-12)
        assert linear_predict_score(model, [-10.0]) == pytest.approx(0.0, abs=1e-12)

    def test_fixture_weights(self):
        model = LinearModel(weights=np.array([1.0]), intercept=0.0, lam=0.0)
        assert linear_predict_score(model, [0.0]) == 0.5

    def test_row_forms_agree(self):
        model = LinearModel(weights=np.array([0.5, -1.0, 2.0]), intercept=0.3, lam=0.0)
        dense = [1.0, 0.0, 2.0]
        assert linear_predict_score(model, dense) == pytest.approx(
            linear_predict_score(model, ({0: 1.0, 2: 2.0}))
        )
        assert linear_predict_score(model, (np.array([0, 2]), np.array([1.0, 2.0]))) == pytest.approx(
            linear_predict_score(model, dense)
        )

    def test_index_out_of_range(self):
        model = LinearModel(weights=np.zeros(2), intercept=0.0, lam=0.0)
        with pytest.raises(IndexOutOfRange):
            linear_predict_score(model, {4: 1.0})

    def test_sigmoid_stable(self):
        assert sigmoid(np.array([-800.0]))[0] == 0.0
        assert sigmoid(np.array([800.0]))[0] == 1.0


class TestLinearSerialization:
    def test_roundtrip(self, tmp_path, rng):
        X = rng.integers(0, 3, (12, 4)).astype(float)
        y = (X[:, 0] > 1).astype(int)
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_l1_linear(m, lam=0.05)
        path = tmp_path / "l.klin"
        save_linear(model, path)
        loaded = load_linear(path)
        assert np.array_equal(loaded.weights, model.weights)
        assert loaded.intercept == model.intercept
        assert loaded.lam == model.lam

    def test_truncation(self, tmp_path):
        from genopheno.errors import CorruptModelFile

        model = LinearModel(weights=np.arange(4, dtype=float), intercept=1.0, lam=0.5)
        path = tmp_path / "l.klin"
        save_linear(model, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CorruptModelFile):
            load_linear(path)
