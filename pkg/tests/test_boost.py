import numpy as np
import pytest

from genopheno.boost import (
    BoostModel,
    Stump,
    boost_predict,
    boost_predict_score,
    boost_scores,
    fit_adaboost,
    load_boost,
    save_boost,
)
from genopheno.errors import DegenerateWeakLearner, SingleClassTraining
from genopheno.matrix import FeatureMatrix


def brute_force_stump(X, y_pm, w):
    """Enumerate every (feature, midpoint threshold, polarity) by loops."""
    X = np.asarray(X, dtype=float)
    best = None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2.0
            for pol in (-1, 1):
                pred = np.where(X[:, j] > thr, pol, -pol)
                eps = w[pred != y_pm].sum()
                key = (eps, j, thr, pol)
                if best is None or key < best:
                    best = key
    return best


def training_error(model, X, y01):
    preds = [boost_predict(model, row.astype(float)) for row in np.asarray(X)]
    return np.mean(np.asarray(preds) != np.asarray(y01).astype(bool))


class TestStumpSearch:
    def test_matches_brute_force(self, rng):
        from genopheno.boost import _best_stump
        from genopheno.splitsearch import ColumnStore

        for trial in range(25):
            n, p = int(rng.integers(3, 10)), int(rng.integers(1, 5))
            X = rng.integers(0, 4, (n, p))
            y01 = rng.integers(0, 2, n)
            y_pm = np.where(y01 > 0, 1.0, -1.0)
            w = rng.random(n) + 0.05
            w = w / w.sum()
            fm = FeatureMatrix.from_dense(X)
            store = ColumnStore(fm.indptr, fm.indices, fm.values, n, p)
            got = _best_stump(store, w, y_pm)
            want = brute_force_stump(X, y_pm, w)
            if want is None:
                assert got is None
            else:
                stump, eps = got
                assert eps == pytest.approx(want[0], abs=1e-12)
                # the returned stump must itself achieve the optimal error
                pred = np.where(X[:, stump.feature] > stump.threshold, stump.polarity, -stump.polarity)
                assert w[pred != y_pm].sum() == pytest.approx(want[0], abs=1e-12)

    def test_exact_tie_prefers_lowest_feature(self):
        from genopheno.boost import _best_stump
        from genopheno.splitsearch import ColumnStore

        X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]])
        fm = FeatureMatrix.from_dense(X)
        store = ColumnStore(fm.indptr, fm.indices, fm.values, 4, 2)
        stump, eps = _best_stump(store, np.full(4, 0.25), np.array([-1.0, -1.0, 1.0, 1.0]))
        assert (stump.feature, eps) == (0, 0.0)


class TestFitAdaboost:
    def test_separable_1d_one_stump(self):
        m = FeatureMatrix.from_dense([[0], [0], [3], [4]], labels=[0, 0, 1, 1])
        model = fit_adaboost(m, n_rounds=10)
        assert len(model.stumps) == 1
        assert training_error(model, [[0], [0], [3], [4]], [0, 0, 1, 1]) == 0.0

    def test_degenerate_first_round(self):
        # two identical rows with opposite labels: every stump has error 0.5
        m = FeatureMatrix.from_dense([[1], [1]], labels=[0, 1])
        with pytest.raises(DegenerateWeakLearner):
            fit_adaboost(m, n_rounds=5)

    def test_xor_style_improves_over_single_stump(self):
        # no single axis threshold separates these labels; a 10-round committee
        # reaches zero training error while the best lone stump errs on 2 of 8
        X = [[1, 4], [4, 3], [2, 2], [0, 1], [4, 2], [1, 1], [3, 0], [4, 4]]
        y = [1, 0, 1, 1, 0, 0, 0, 1]
        m = FeatureMatrix.from_dense(X, labels=y)
        boosted = fit_adaboost(m, n_rounds=10)
        single = BoostModel(boosted.stumps[:1], boosted.alphas[:1], boosted.n_features)
        assert training_error(single, X, y) == 0.25
        assert training_error(boosted, X, y) == 0.0

    def test_weights_sum_to_one_every_round(self, rng):
        for trial in range(10):
            n, p = 12, 4
            X = rng.integers(0, 3, (n, p))
            y = rng.integers(0, 2, n)
            X[:, 0] = y + rng.integers(0, 2, n)  # some signal
            if len(np.unique(y)) < 2:
                continue
            m = FeatureMatrix.from_dense(X, labels=y)
            try:
                model = fit_adaboost(m, n_rounds=8)
            except DegenerateWeakLearner:
                continue
            for s in model.weight_sums:
                assert abs(s - 1.0) <= 1e-9

    def test_single_class_rejected(self):
        m = FeatureMatrix.from_dense([[0], [1]], labels=[1, 1])
        with pytest.raises(SingleClassTraining):
            fit_adaboost(m)

    def test_deterministic(self, rng):
        X = rng.integers(0, 4, (20, 6))
        y = rng.integers(0, 2, 20)
        X[:, 2] += y
        m = FeatureMatrix.from_dense(X, labels=y)
        a = fit_adaboost(m, n_rounds=12)
        b = fit_adaboost(m, n_rounds=12)
        assert a.stumps == b.stumps
        assert np.array_equal(a.alphas, b.alphas)


class TestPredictScore:
    def test_no_stumps_scores_half(self):
        model = BoostModel((), np.zeros(0), 3)
        assert boost_predict_score(model, [0.0, 0.0, 0.0]) == 0.5

    def test_score_maps_margin_to_unit_interval(self):
        model = BoostModel((Stump(0, 0.5, 1),), np.array([2.0]), 1)
        assert boost_predict_score(model, [1.0]) == 1.0
        assert boost_predict_score(model, [0.0]) == 0.0


class TestBoostSerialization:
    def test_roundtrip(self, tmp_path, rng):
        X = rng.integers(0, 3, (16, 5))
        y = rng.integers(0, 2, 16)
        X[:, 1] = y * 3
        m = FeatureMatrix.from_dense(X, labels=y)
        model = fit_adaboost(m, n_rounds=6)
        path = tmp_path / "b.kada"
        save_boost(model, path)
        loaded = load_boost(path)
        assert loaded.stumps == model.stumps
        assert np.array_equal(loaded.alphas, model.alphas)
        assert loaded.n_features == model.n_features
        sub = m.subset(range(4))
        assert np.array_equal(boost_scores(loaded, sub), boost_scores(model, sub))

    def test_truncation(self, tmp_path):
        from genopheno.errors import CorruptModelFile

        m = FeatureMatrix.from_dense([[0], [1]], labels=[0, 1])
        model = fit_adaboost(m, n_rounds=1)
        path = tmp_path / "b.kada"
        save_boost(model, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CorruptModelFile):
            load_boost(path)
