"""CART decision trees and a seeded random forest over sparse count features.

Split search is exact: for every candidate feature it evaluates thresholds at
midpoints between consecutive distinct observed values (absent sparse entries
count as zero) and keeps the split with the largest weighted Gini decrease,
breaking ties toward the lowest feature index, then the lowest threshold.
Every tree owns an rng stream derived from (seed, tree_index), so forests are
bit-identical regardless of thread count.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptModelFile,
    EmptyNode,
    FeatureCountMismatch,
    IndexOutOfRange,
    NoLabeledSamples,
    SingleClassTraining,
)
from .matrix import FeatureMatrix
from .splitsearch import ColumnStore
from .util import derived_rng, parallel_map

FOREST_MAGIC = b"KFOR1"


def gini_impurity(class_counts):
    """1 - sum((n_c/n)^2) over the two classes; 0 for pure, 0.5 for balanced."""
    n_sus, n_res = class_counts
    if n_sus < 0 or n_res < 0:
        raise ValueError("class counts must be non-negative")
    n = n_sus + n_res
    if n == 0:
        raise EmptyNode("cannot compute impurity of an empty node")
    return 1.0 - (n_sus / n) ** 2 - (n_res / n) ** 2


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features: object = "sqrt"  # "sqrt" | "all" | fixed int
    bootstrap: bool = True
    max_depth: int | None = None
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError(f"unknown max_features rule {self.max_features!r}")
        elif int(self.max_features) < 1:
            raise ValueError("fixed max_features must be >= 1")

    def resolve_max_features(self, n_features):
        if self.max_features == "sqrt":
            return max(1, math.isqrt(n_features))
        if self.max_features == "all":
            return n_features
        m = int(self.max_features)
        if m > n_features:
            raise ValueError(f"fixed max_features {m} exceeds n_features {n_features}")
        return m


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    threshold: float
    impurity_decrease: float


@dataclass(frozen=True)
class Tree:
    """Array-backed binary tree; feature -1 marks a leaf. Internal nodes route
    value <= threshold left. Every node keeps its (SUS, RES) training counts."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_sus: np.ndarray
    n_res: np.ndarray
    n_features: int

    @property
    def n_nodes(self):
        return len(self.feature)

    def leaf_for(self, value_at):
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if value_at(int(self.feature[i])) <= self.threshold[i] else self.right[i]
        return int(i)

    def predict_proba(self, row):
        i = self.leaf_for(_row_accessor(row, self.n_features))
        return self.n_res[i] / (self.n_sus[i] + self.n_res[i])

    def depth(self):
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    n_features: int
    params: ForestParams
    importances: np.ndarray


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.n_sus = []
        self.n_res = []

    def add(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.n_sus.append(0)
        self.n_res.append(0)
        return len(self.feature) - 1

    def finish(self, n_features):
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            n_sus=np.asarray(self.n_sus, dtype=np.int64),
            n_res=np.asarray(self.n_res, dtype=np.int64),
            n_features=n_features,
        )


def _search_split(store, node_w, wpos, W, P, candidates, parent_gini):
    """Best (feature, threshold, decrease) at a node, or None.

    node_w maps row -> weight inside this node (0 outside); wpos is the
    per-row positive-class weight under the same mask.
    """
    flat, slot = store.gather(candidates)
    if len(flat) == 0:
        return None
    erow = store.entry_rows[flat]
    ew = node_w[erow]
    sel = ew > 0
    if not sel.any():
        return None
    ew = ew[sel]
    ewy = wpos[erow[sel]]
    evals = store.entry_vals[flat][sel]
    eslot = slot[sel]
    m = len(ew)

    new_seg = np.empty(m, dtype=bool)
    new_seg[0] = True
    np.not_equal(eslot[1:], eslot[:-1], out=new_seg[1:])
    val_chg = np.empty(m, dtype=bool)
    val_chg[0] = True
    np.not_equal(evals[1:], evals[:-1], out=val_chg[1:])

    cw0 = np.concatenate(([0.0], np.cumsum(ew)))
    cp0 = np.concatenate(([0.0], np.cumsum(ewy)))
    seg_start = np.maximum.accumulate(np.where(new_seg, np.arange(m), 0))
    n_slots = int(eslot[-1]) + 1
    col_w = np.bincount(eslot, weights=ew, minlength=n_slots)[eslot]
    col_p = np.bincount(eslot, weights=ewy, minlength=n_slots)[eslot]
    zeros_w = W - col_w

    boundary = np.where(new_seg, zeros_w > 0, val_chg)
    t = np.flatnonzero(boundary)
    if len(t) == 0:
        return None
    lw = zeros_w[t] + (cw0[t] - cw0[seg_start[t]])
    lp = (P - col_p[t]) + (cp0[t] - cp0[seg_start[t]])
    rw = W - lw
    rp = P - lp
    g_left = 1.0 - (lp / lw) ** 2 - ((lw - lp) / lw) ** 2
    g_right = 1.0 - (rp / rw) ** 2 - ((rw - rp) / rw) ** 2
    decrease = parent_gini - (lw * g_left + rw * g_right) / W
    best = int(np.argmax(decrease))
    if decrease[best] <= 0.0:
        return None
    tb = t[best]
    prev_val = 0.0 if new_seg[tb] else evals[tb - 1]
    return SplitDecision(
        feature=int(candidates[eslot[tb]]),
        threshold=0.5 * (prev_val + evals[tb]),
        impurity_decrease=float(decrease[best]),
    )


def _grow_tree(store, y01, weights, params, rng, importances):
    n_rows = store.n_rows
    p = store.n_features
    m_cand = params.resolve_max_features(p)
    wpos_all = weights * y01
    root_rows = np.flatnonzero(weights > 0).astype(np.int64)
    w_root = float(weights.sum())

    node_w = np.zeros(n_rows, dtype=np.float64)
    node_wpos = np.zeros(n_rows, dtype=np.float64)
    col_scratch = np.zeros(n_rows, dtype=np.float64)

    tb = _TreeBuilder()
    root = tb.add()
    stack = [(root, root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        w = weights[rows]
        W = float(w.sum())
        P = float(wpos_all[rows].sum())
        tb.n_sus[node] = int(round(W - P))
        tb.n_res[node] = int(round(P))
        if P == 0.0 or P == W or W < params.min_samples_split:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if m_cand >= p:
            candidates = np.arange(p, dtype=np.int64)
        else:
            candidates = np.sort(rng.choice(p, size=m_cand, replace=False)).astype(np.int64)
        parent_gini = 1.0 - (P / W) ** 2 - ((W - P) / W) ** 2
        node_w[rows] = w
        node_wpos[rows] = wpos_all[rows]
        split = _search_split(store, node_w, node_wpos, W, P, candidates, parent_gini)
        node_w[rows] = 0.0
        node_wpos[rows] = 0.0
        if split is None:
            continue
        importances[split.feature] += (W / w_root) * split.impurity_decrease
        crows, cvals = store.column(split.feature)
        col_scratch[crows] = cvals
        go_left = col_scratch[rows] <= split.threshold
        col_scratch[crows] = 0.0
        tb.feature[node] = split.feature
        tb.threshold[node] = split.threshold
        left = tb.add()
        right = tb.add()
        tb.left[node] = left
        tb.right[node] = right
        # push right first so the left child is processed next (fixed rng order)
        stack.append((right, rows[~go_left], depth + 1))
        stack.append((left, rows[go_left], depth + 1))
    return tb.finish(p)


def _training_view(X, y=None):
    """(ColumnStore, y01 array) from a FeatureMatrix (labeled rows) or a dense
    array plus labels."""
    if isinstance(X, FeatureMatrix):
        if y is None:
            rows = X.labeled_row_indices()
            if len(rows) == 0:
                raise NoLabeledSamples("matrix has no labeled rows")
            sub = X.subset(rows)
            y01 = sub.labels.astype(np.float64)
        else:
            sub = X
            y01 = np.asarray([int(v) for v in y], dtype=np.float64)
        store = ColumnStore(sub.indptr, sub.indices, sub.values, sub.n_rows, sub.n_features)
        return store, y01
    dense = np.asarray(X, dtype=np.float64)
    if y is None:
        raise NoLabeledSamples("labels are required with a dense array")
    fm = FeatureMatrix.from_dense(dense)
    store = ColumnStore(fm.indptr, fm.indices, fm.values, fm.n_rows, fm.n_features)
    return store, np.asarray([int(v) for v in y], dtype=np.float64)


def best_split(X, y=None, candidate_features=None, sample_weight=None):
    """Exhaustive best split over the candidate features; None if nothing helps."""
    store, y01 = _training_view(X, y)
    if candidate_features is None:
        candidates = np.arange(store.n_features, dtype=np.int64)
    else:
        candidates = np.sort(np.asarray(candidate_features, dtype=np.int64))
    w = np.ones(store.n_rows) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    wpos = w * y01
    W = float(w.sum())
    P = float(wpos.sum())
    parent_gini = 1.0 - (P / W) ** 2 - ((W - P) / W) ** 2
    return _search_split(store, w.copy(), wpos.copy(), W, P, candidates, parent_gini)


def fit_tree(X, y=None, params=None, rng=None, sample_weight=None):
    """Grow one CART tree; sample_weight must be integer multiplicities."""
    params = params or ForestParams(n_trees=1, max_features="all", bootstrap=False)
    rng = rng if rng is not None else derived_rng(params.seed, 0)
    store, y01 = _training_view(X, y)
    if store.n_rows == 0:
        raise NoLabeledSamples("no samples to fit")
    w = np.ones(store.n_rows) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    imp = np.zeros(store.n_features)
    return _grow_tree(store, y01, w, params, rng, imp)


def fit_forest(matrix, params, threads=1):
    """Train n_trees CART trees on bootstrap resamples and accumulate
    mean-decrease-impurity feature importances, normalized to sum 1."""
    store, y01 = _training_view(matrix)
    n = store.n_rows
    p = store.n_features
    n_res = int(y01.sum())
    if n < 2 or n_res == 0 or n_res == n:
        raise SingleClassTraining("training requires at least two labeled rows with both classes")
    params.resolve_max_features(p)  # validates fixed m

    def one_tree(t):
        rng = derived_rng(params.seed, t)
        if params.bootstrap:
            draws = rng.integers(0, n, size=n)
            w = np.bincount(draws, minlength=n).astype(np.float64)
        else:
            w = np.ones(n, dtype=np.float64)
        imp = np.zeros(p)
        tree = _grow_tree(store, y01, w, params, rng, imp)
        return tree, imp

    results = parallel_map(one_tree, list(range(params.n_trees)), threads=threads)
    importances = np.zeros(p)
    for _, imp in results:
        importances += imp
    total = importances.sum()
    if total > 0:
        importances /= total
    return ForestModel(
        trees=tuple(tree for tree, _ in results),
        n_features=p,
        params=params,
        importances=importances,
    )


def _row_accessor(row, n_features):
    """Turn a sparse or dense row into a value_at(feature) callable."""
    if isinstance(row, dict):
        if row and max(row) >= n_features:
            raise IndexOutOfRange(f"row index {max(row)} >= n_features {n_features}")
        return lambda j: row.get(j, 0)
    if isinstance(row, tuple) and len(row) == 2:
        idx, val = row
        idx = np.asarray(idx)
        if len(idx) and int(idx.max()) >= n_features:
            raise IndexOutOfRange(f"row index {int(idx.max())} >= n_features {n_features}")
        d = dict(zip((int(i) for i in idx), (float(v) for v in val)))
        return lambda j: d.get(j, 0)
    arr = np.asarray(row, dtype=np.float64)
    if arr.ndim != 1 or len(arr) != n_features:
        raise IndexOutOfRange(f"dense row length {arr.shape} does not match n_features {n_features}")
    return lambda j: arr[j]


def forest_predict_proba(model, row):
    """Mean leaf RES-fraction over the trees; classify RES when >= 0.5."""
    value_at = _row_accessor(row, model.n_features)
    acc = 0.0
    for tree in model.trees:
        i = tree.leaf_for(value_at)
        acc += tree.n_res[i] / (tree.n_sus[i] + tree.n_res[i])
    return acc / len(model.trees)


def forest_predict(model, row, threshold=0.5):
    """Classify RES when the probability reaches the threshold (tie -> RES)."""
    return forest_predict_proba(model, row) >= threshold


def forest_scores(model, matrix, rows=None):
    """RES probabilities for the given matrix rows (default: all rows)."""
    if matrix.n_features != model.n_features:
        raise FeatureCountMismatch(
            f"matrix has {matrix.n_features} features but model expects {model.n_features}"
        )
    rows = np.arange(matrix.n_rows) if rows is None else np.asarray(rows)
    return np.array([forest_predict_proba(model, matrix.row(int(i))) for i in rows])


def save_forest(model, path):
    """KFOR1 layout: header, params, importances, then per-tree node arrays."""
    with open(path, "wb") as fh:
        fh.write(FOREST_MAGIC)
        fh.write(struct.pack("<QQ", model.n_features, len(model.trees)))
        p = model.params
        mf_kind, mf_fixed = {"sqrt": (0, 0), "all": (1, 0)}.get(p.max_features, (2, 0))
        if mf_kind == 2:
            mf_fixed = int(p.max_features)
        fh.write(
            struct.pack(
                "<QBQBqQQ",
                p.n_trees,
                mf_kind,
                mf_fixed,
                1 if p.bootstrap else 0,
                -1 if p.max_depth is None else p.max_depth,
                p.min_samples_split,
                p.seed,
            )
        )
        fh.write(model.importances.astype("<f8").tobytes())
        for tree in model.trees:
            fh.write(struct.pack("<Q", tree.n_nodes))
            fh.write(tree.feature.astype("<i8").tobytes())
            fh.write(tree.threshold.astype("<f8").tobytes())
            fh.write(tree.left.astype("<i8").tobytes())
            fh.write(tree.right.astype("<i8").tobytes())
            fh.write(tree.n_sus.astype("<i8").tobytes())
            fh.write(tree.n_res.astype("<i8").tobytes())


def _need(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise CorruptModelFile(f"truncated forest file while reading {what}")
    return raw


def load_forest(path):
    with open(path, "rb") as fh:
        if fh.read(5) != FOREST_MAGIC:
            raise CorruptModelFile("bad forest magic")
        n_features, n_trees = struct.unpack("<QQ", _need(fh, 16, "header"))
        params_rec = struct.Struct("<QBQBqQQ")
        pt, mf_kind, mf_fixed, boot, depth, mss, seed = params_rec.unpack(
            _need(fh, params_rec.size, "params")
        )
        if mf_kind not in (0, 1, 2):
            raise CorruptModelFile(f"bad max_features kind {mf_kind}")
        params = ForestParams(
            n_trees=pt,
            max_features={0: "sqrt", 1: "all"}.get(mf_kind, mf_fixed),
            bootstrap=bool(boot),
            max_depth=None if depth < 0 else depth,
            min_samples_split=mss,
            seed=seed,
        )
        importances = np.frombuffer(_need(fh, 8 * n_features, "importances"), dtype="<f8").copy()
        trees = []
        for t in range(n_trees):
            (n_nodes,) = struct.unpack("<Q", _need(fh, 8, f"tree {t} size"))
            arrays = {}
            for name, dt in (
                ("feature", "<i8"),
                ("threshold", "<f8"),
                ("left", "<i8"),
                ("right", "<i8"),
                ("n_sus", "<i8"),
                ("n_res", "<i8"),
            ):
                arrays[name] = np.frombuffer(_need(fh, 8 * n_nodes, f"tree {t} {name}"), dtype=dt).copy()
            feat = arrays["feature"]
            if len(feat) and int(feat.max()) >= n_features:
                raise CorruptModelFile(f"tree {t} references a feature out of range")
            trees.append(Tree(n_features=n_features, **arrays))
        if fh.read(1):
            raise CorruptModelFile("trailing bytes after last tree")
    return ForestModel(tuple(trees), n_features, params, importances)
