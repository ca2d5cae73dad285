"""Discrete AdaBoost over depth-1 stumps on {-1,+1} labels.

Each round fits the stump minimizing weighted misclassification, searching all
features, all midpoint thresholds (absent sparse entries are zeros), and both
polarities; ties resolve by (error, feature, threshold, polarity). Stump
weight is alpha = 0.5*ln((1-eps)/eps) with eps clamped away from 0 and 1.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptModelFile,
    DegenerateWeakLearner,
    IndexOutOfRange,
    SingleClassTraining,
)
from .forest import _row_accessor, _training_view

BOOST_MAGIC = b"KADA1"

EPS_CLAMP = 1e-10


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: predict RES when value > threshold; -1: the reverse

    def predict(self, value):
        return self.polarity if value > self.threshold else -self.polarity


@dataclass(frozen=True)
class BoostModel:
    stumps: tuple
    alphas: np.ndarray
    n_features: int
    weight_sums: tuple = field(default=(), compare=False)  # post-round diagnostics


def _best_stump(store, w, y_pm):
    """Minimum weighted-error stump over all features, or None if no threshold
    partitions the data."""
    rows = store.entry_rows
    evals = store.entry_vals
    if len(rows) == 0:
        return None
    wpos_all = np.where(y_pm > 0, w, 0.0)
    W = float(w.sum())
    Wp = float(wpos_all.sum())
    Wn = W - Wp

    ew = w[rows]
    ewp = wpos_all[rows]
    ecol = np.repeat(np.arange(store.n_features), np.diff(store.col_indptr))
    m = len(rows)
    new_seg = np.empty(m, dtype=bool)
    new_seg[0] = True
    np.not_equal(ecol[1:], ecol[:-1], out=new_seg[1:])
    val_chg = np.empty(m, dtype=bool)
    val_chg[0] = True
    np.not_equal(evals[1:], evals[:-1], out=val_chg[1:])

    cw0 = np.concatenate(([0.0], np.cumsum(ew)))
    cp0 = np.concatenate(([0.0], np.cumsum(ewp)))
    seg_start = np.maximum.accumulate(np.where(new_seg, np.arange(m), 0))
    col_w = np.bincount(ecol, weights=ew, minlength=store.n_features)[ecol]
    col_p = np.bincount(ecol, weights=ewp, minlength=store.n_features)[ecol]
    zeros_w = W - col_w

    boundary = np.where(new_seg, zeros_w > 0, val_chg)
    t = np.flatnonzero(boundary)
    if len(t) == 0:
        return None
    lw = zeros_w[t] + (cw0[t] - cw0[seg_start[t]])
    lp = (Wp - col_p[t]) + (cp0[t] - cp0[seg_start[t]])
    # polarity +1 errs on left positives and right negatives
    eps_plus = lp + (Wn - (lw - lp))
    eps_minus = W - eps_plus
    flat = np.empty(2 * len(t))
    flat[0::2] = eps_minus  # polarity -1 first: ties resolve toward -1
    flat[1::2] = eps_plus
    best = int(np.argmin(flat))
    tb = t[best // 2]
    polarity = -1 if best % 2 == 0 else 1
    prev_val = 0.0 if new_seg[tb] else evals[tb - 1]
    stump = Stump(
        feature=int(ecol[tb]),
        threshold=0.5 * (prev_val + evals[tb]),
        polarity=polarity,
    )
    return stump, float(flat[best])


def _stump_margins(store, stump, n_rows):
    """h(x_i) in {-1,+1} for every training row."""
    crows, cvals = store.column(stump.feature)
    vals = np.zeros(n_rows)
    vals[crows] = cvals
    return np.where(vals > stump.threshold, stump.polarity, -stump.polarity).astype(np.float64)


def fit_adaboost(matrix, n_rounds=50, seed=0, y=None):
    """Boost decision stumps for up to n_rounds; stops early on a perfect stump
    or once no stump has an edge. The seed is accepted for interface symmetry;
    the exhaustive stump search is deterministic."""
    store, y01 = _training_view(matrix, y)
    n = store.n_rows
    n_res = int(y01.sum())
    if n < 2 or n_res == 0 or n_res == n:
        raise SingleClassTraining("boosting requires both classes in the training labels")
    y_pm = np.where(y01 > 0, 1.0, -1.0)

    w = np.full(n, 1.0 / n)
    stumps = []
    alphas = []
    weight_sums = []
    for rnd in range(n_rounds):
        found = _best_stump(store, w, y_pm)
        if found is None:
            if rnd == 0:
                raise DegenerateWeakLearner("no stump partitions the training data")
            break
        stump, eps = found
        if eps >= 0.5:
            if rnd == 0:
                raise DegenerateWeakLearner(f"best first-round stump has weighted error {eps:.6f} >= 0.5")
            break
        eps_c = min(max(eps, EPS_CLAMP), 1.0 - EPS_CLAMP)
        alpha = 0.5 * math.log((1.0 - eps_c) / eps_c)
        h = _stump_margins(store, stump, n)
        stumps.append(stump)
        alphas.append(alpha)
        w = w * np.exp(-alpha * y_pm * h)
        w = w / w.sum()
        weight_sums.append(float(w.sum()))
        if eps <= EPS_CLAMP:
            break
    return BoostModel(
        stumps=tuple(stumps),
        alphas=np.asarray(alphas, dtype=np.float64),
        n_features=store.n_features,
        weight_sums=tuple(weight_sums),
    )


def boost_predict_score(model, row):
    """Weighted vote mapped to [0,1]: 0.5 is the decision boundary (tie -> RES)."""
    value_at = _row_accessor(row, model.n_features)
    total = float(model.alphas.sum())
    if total == 0.0:
        return 0.5
    margin = sum(a * s.predict(value_at(s.feature)) for s, a in zip(model.stumps, model.alphas))
    return 0.5 * (margin / total + 1.0)


def boost_predict(model, row, threshold=0.5):
    return boost_predict_score(model, row) >= threshold


def boost_scores(model, matrix, rows=None):
    rows = np.arange(matrix.n_rows) if rows is None else np.asarray(rows)
    if matrix.n_features != model.n_features:
        raise IndexOutOfRange(
            f"matrix has {matrix.n_features} features but model expects {model.n_features}"
        )
    return np.array([boost_predict_score(model, matrix.row(int(i))) for i in rows])


def save_boost(model, path):
    with open(path, "wb") as fh:
        fh.write(BOOST_MAGIC)
        fh.write(struct.pack("<QQ", model.n_features, len(model.stumps)))
        for stump, alpha in zip(model.stumps, model.alphas):
            fh.write(struct.pack("<Qdbd", stump.feature, stump.threshold, stump.polarity, alpha))


def load_boost(path):
    with open(path, "rb") as fh:
        if fh.read(5) != BOOST_MAGIC:
            raise CorruptModelFile("bad boost magic")
        head = fh.read(16)
        if len(head) != 16:
            raise CorruptModelFile("truncated boost header")
        n_features, n_stumps = struct.unpack("<QQ", head)
        stumps = []
        alphas = []
        rec = struct.Struct("<Qdbd")
        for i in range(n_stumps):
            raw = fh.read(rec.size)
            if len(raw) != rec.size:
                raise CorruptModelFile(f"truncated stump record {i}")
            feat, thr, pol, alpha = rec.unpack(raw)
            if feat >= n_features or pol not in (-1, 1):
                raise CorruptModelFile(f"bad stump record {i}")
            stumps.append(Stump(int(feat), float(thr), int(pol)))
            alphas.append(alpha)
        if fh.read(1):
            raise CorruptModelFile("trailing bytes after last stump")
    return BoostModel(tuple(stumps), np.asarray(alphas), n_features)
