"""Experiment suite: holdout accuracy, ROC/AUC, learning curves over subsample
sizes, aggregation of feature importance into annotated regions, and rank
stability of the top regions across repeated subsamples.

Every repeated experiment derives its per-cell seeds from (seed, size, repeat),
so results are independent of execution order and thread count.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    FeatureCountMismatch,
    InconsistentK,
    LengthMismatch,
    MalformedLabelTable,
    SingleClassEval,
    SizeExceedsDataset,
    TooFewSamples,
    VocabularyMismatch,
)
from .forest import fit_forest, forest_scores
from .kmers import canonical as canonical_code
from .kmers import encode_kmer
from .sequences import Phenotype
from .util import derived_rng, derived_seed, parallel_map, write_tsv

UNANNOTATED = "UNANNOTATED"


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")


def _largest_remainder_quota(counts, total):
    """Split `total` across groups proportionally to counts, off by at most one
    per group; ties go to the earlier group."""
    counts = np.asarray(counts, dtype=np.float64)
    exact = counts / counts.sum() * total
    base = np.floor(exact).astype(np.int64)
    short = int(total - base.sum())
    order = np.lexsort((np.arange(len(counts)), -(exact - base)))
    for g in order[:short]:
        base[g] += 1
    return base


def train_test_split(matrix, spec):
    """Disjoint, exhaustive partition of the labeled rows into (train, test)
    index arrays, sorted ascending. Stratified mode keeps the class ratio in
    the test set within one sample per class."""
    labeled = matrix.labeled_row_indices()
    n = len(labeled)
    if n < 2:
        raise TooFewSamples(f"need at least 2 labeled rows, have {n}")
    n_test = int(round(spec.test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    rng = derived_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        test = np.sort(labeled[perm[:n_test]])
    else:
        y = matrix.labels[labeled]
        class_rows = [labeled[y == int(c)] for c in (Phenotype.SUS, Phenotype.RES)]
        if any(len(rows) < 2 for rows in class_rows):
            raise TooFewSamples("stratified split needs at least 2 labeled rows per class")
        quota = _largest_remainder_quota([len(r) for r in class_rows], n_test)
        picks = []
        for rows, t in zip(class_rows, quota):
            perm = rng.permutation(len(rows))
            picks.append(rows[perm[:t]])
        test = np.sort(np.concatenate(picks))
    mask = np.zeros(matrix.n_rows, dtype=bool)
    mask[test] = True
    train = labeled[~mask[labeled]]
    return np.sort(train), test


def accuracy(predictions, labels):
    """Fraction of exact matches."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape or len(p) == 0:
        raise LengthMismatch(f"predictions {p.shape} vs labels {y.shape}")
    return float(np.mean(p == y))


@dataclass(frozen=True)
class RocCurve:
    points: tuple  # (fpr, tpr) pairs from (0,0) to (1,1), one vertex per distinct score
    auc: float


def trapezoid_auc(points):
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def roc_curve(scores, labels):
    """ROC points sorted by descending score with ties grouped; AUC by the
    trapezoid rule (ties count one half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if len(s) != len(y):
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassEval("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    group_end = np.flatnonzero(np.concatenate((s_sorted[1:] != s_sorted[:-1], [True])))
    tp = np.cumsum(y_sorted)[group_end]
    fp = group_end + 1 - tp
    points = [(0.0, 0.0)] + [(f / n_neg, t / n_pos) for f, t in zip(fp, tp)]
    return RocCurve(points=tuple(points), auc=trapezoid_auc(points))


def pairwise_auc(scores, labels):
    """Probability a random RES outscores a random SUS, ties counted one half.
    O(n^2); kept as the independent cross-check of the trapezoid AUC."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    pos = s[y == 1]
    neg = s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins) / (len(pos) * len(neg))


@dataclass(frozen=True)
class EvalReport:
    k: int
    canonical: bool
    n_isolates: int
    n_features: int
    seed: int
    algorithm: str
    accuracy: float | None
    auc: float | None
    roc_points: tuple
    curve: object = None  # LearningCurve, when the run produced one
    top_regions: tuple | None = None  # (region_id, importance) pairs

    def to_json(self):
        curve = None
        if self.curve is not None:
            curve = {
                "sizes": list(self.curve.sizes),
                "mean_accuracy": list(self.curve.mean_accuracy),
                "std_accuracy": list(self.curve.std_accuracy),
                "repeats": self.curve.repeats,
            }
        d = {
            "k": self.k,
            "canonical": self.canonical,
            "n_isolates": self.n_isolates,
            "n_features": self.n_features,
            "seed": self.seed,
            "algorithm": self.algorithm,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "roc_points": [[float(x), float(y)] for x, y in self.roc_points],
            "curve": curve,
            "top_regions": None
            if self.top_regions is None
            else [[r, float(v)] for r, v in self.top_regions],
        }
        return json.dumps(d, sort_keys=True, indent=2) + "\n"


def _report_from_scores(matrix, scores, rows, params_seed, algorithm):
    y = matrix.labels[rows]
    preds = (scores >= 0.5).astype(np.int64)
    acc = accuracy(preds, y)
    if len(np.unique(y)) == 2:
        roc = roc_curve(scores, y)
        auc, points = roc.auc, roc.points
    else:
        auc, points = None, ()
    return EvalReport(
        k=matrix.vocabulary.spec.k,
        canonical=matrix.vocabulary.spec.canonical,
        n_isolates=len(rows),
        n_features=matrix.n_features,
        seed=params_seed,
        algorithm=algorithm,
        accuracy=acc,
        auc=auc,
        roc_points=points,
    )


def evaluate_split(matrix, split, params, threads=1):
    """Single holdout run: split, fit a forest on the train rows, report test
    accuracy and ROC."""
    train, test = train_test_split(matrix, split)
    model = fit_forest(matrix.subset(train), params, threads=threads)
    test_matrix = matrix.subset(test)
    scores = forest_scores(model, test_matrix)
    return _report_from_scores(test_matrix, scores, np.arange(test_matrix.n_rows), params.seed, "forest")


@dataclass(frozen=True)
class LearningCurve:
    sizes: tuple
    mean_accuracy: tuple
    std_accuracy: tuple
    repeats: int
    seed: int


def cell_seeds(seed, size, repeat):
    """(subsample_seed, split_seed, forest_seed) for one learning-curve or
    stability cell; part of the reproducibility contract."""
    return (
        derived_seed(seed, size, repeat, 0),
        derived_seed(seed, size, repeat, 1),
        derived_seed(seed, size, repeat, 2),
    )


def _stratified_subsample(matrix, size, sub_seed):
    """Row indices (sorted ascending) of a stratified subsample of labeled rows."""
    labeled = matrix.labeled_row_indices()
    if size > len(labeled):
        raise SizeExceedsDataset(f"subsample size {size} exceeds {len(labeled)} labeled rows")
    rng = derived_rng(sub_seed)
    y = matrix.labels[labeled]
    class_rows = [labeled[y == int(c)] for c in (Phenotype.SUS, Phenotype.RES)]
    quota = _largest_remainder_quota([len(r) for r in class_rows], size)
    picks = []
    for rows, t in zip(class_rows, quota):
        perm = rng.permutation(len(rows))
        picks.append(rows[perm[:t]])
    return np.sort(np.concatenate(picks))


def learning_curve(matrix, sizes, repeats, params, seed, threads=1, protocol="resample"):
    """Accuracy as a function of subsample size.

    The default "resample" protocol draws a stratified subsample per (size,
    repeat) and runs an 80/20 split inside it. The "fixed-test" alternative
    holds out one 20% test set up front and subsamples training rows only, so
    every cell is scored on the same rows.
    """
    if protocol not in ("resample", "fixed-test"):
        raise ValueError(f"unknown learning-curve protocol {protocol!r}")
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")

    if protocol == "fixed-test":
        holdout_seed = derived_seed(seed, 999983)
        train_rows, test_rows = train_test_split(
            matrix, SplitSpec(test_fraction=0.2, stratified=True, seed=holdout_seed)
        )
        pool = matrix.subset(train_rows)
        test_matrix = matrix.subset(test_rows)
    else:
        pool = matrix
        test_matrix = None
    n_pool = len(pool.labeled_row_indices())
    for s in sizes:
        if s > n_pool:
            raise SizeExceedsDataset(f"size {s} exceeds {n_pool} available labeled rows")

    cells = [(s, r) for s in sizes for r in range(repeats)]

    def run_cell(cell):
        s, r = cell
        sub_seed, split_seed, forest_seed = cell_seeds(seed, s, r)
        rows = _stratified_subsample(pool, s, sub_seed)
        sub = pool.subset(rows)
        if protocol == "fixed-test":
            model = fit_forest(sub, replace(params, seed=forest_seed))
            scores = forest_scores(model, test_matrix)
            return accuracy(scores >= 0.5, test_matrix.labels)
        report = evaluate_split(
            sub,
            SplitSpec(test_fraction=0.2, stratified=True, seed=split_seed),
            replace(params, seed=forest_seed),
        )
        return report.accuracy

    accs = np.asarray(parallel_map(run_cell, cells, threads=threads)).reshape(len(sizes), repeats)
    return LearningCurve(
        sizes=tuple(sizes),
        mean_accuracy=tuple(float(v) for v in accs.mean(axis=1)),
        std_accuracy=tuple(float(v) for v in accs.std(axis=1)),
        repeats=repeats,
        seed=seed,
    )


@dataclass(frozen=True)
class RegionAnnotation:
    """Canonicalized k-mer code -> region id; codes absent here are unannotated."""

    spec: object
    mapping: dict

    def regions(self):
        return sorted(set(self.mapping.values()))


def load_region_annotation(stream, spec):
    """Read TSV rows (kmer_text, region_id); k-mers are canonicalized under the
    active spec before keying."""
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    mapping = {}
    for lineno, raw in enumerate(data.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedLabelTable(f"annotation line {lineno}: expected 2 columns, got {len(parts)}")
        kmer_text, region = parts[0].strip(), parts[1].strip()
        if len(kmer_text) != spec.k:
            raise InconsistentK(f"annotation line {lineno}: k-mer length {len(kmer_text)} != k={spec.k}")
        if not region:
            raise MalformedLabelTable(f"annotation line {lineno}: empty region id")
        code = encode_kmer(kmer_text)
        if spec.canonical:
            code = canonical_code(code, spec.k)
        if code in mapping and mapping[code] != region:
            raise MalformedLabelTable(
                f"annotation line {lineno}: k-mer maps to both {mapping[code]!r} and {region!r}"
            )
        mapping[code] = region
    return RegionAnnotation(spec=spec, mapping=mapping)


@dataclass(frozen=True)
class RegionRanking:
    entries: tuple  # (region_id, aggregate_importance), importance desc then id asc

    def rank_of(self, region_id):
        """1-based rank; raises KeyError for unknown regions."""
        for i, (rid, _) in enumerate(self.entries, start=1):
            if rid == region_id:
                return i
        raise KeyError(region_id)

    def importance_of(self, region_id):
        for rid, imp in self.entries:
            if rid == region_id:
                return imp
        raise KeyError(region_id)


def rank_regions(model, vocabulary, annotation, top_n=None):
    """Sum feature importances by annotated region; unannotated mass lands in
    the reserved UNANNOTATED bucket. Sorted by (importance desc, region asc)."""
    if model.n_features != len(vocabulary.codes):
        raise FeatureCountMismatch(
            f"model expects {model.n_features} features, vocabulary has {len(vocabulary.codes)}"
        )
    regions = annotation.regions()
    region_pos = {r: i for i, r in enumerate(regions)}
    sums = np.zeros(len(regions) + 1)  # last slot is UNANNOTATED
    if annotation.mapping:
        ann_codes = np.fromiter(annotation.mapping.keys(), dtype=np.uint64, count=len(annotation.mapping))
        order = np.argsort(ann_codes)
        ann_codes = ann_codes[order]
        ann_slot = np.asarray(
            [region_pos[r] for r in np.asarray(list(annotation.mapping.values()), dtype=object)[order]],
            dtype=np.int64,
        )
        idx = np.searchsorted(ann_codes, vocabulary.codes)
        idx_c = np.minimum(idx, len(ann_codes) - 1)
        hit = ann_codes[idx_c] == vocabulary.codes
        slots = np.where(hit, ann_slot[idx_c], len(regions))
    else:
        slots = np.full(len(vocabulary.codes), len(regions), dtype=np.int64)
    np.add.at(sums, slots, model.importances)
    names = regions + [UNANNOTATED]
    ranked = sorted(zip(names, sums), key=lambda kv: (-kv[1], kv[0]))
    if top_n is not None:
        ranked = ranked[:top_n]
    return RegionRanking(entries=tuple((r, float(v)) for r, v in ranked))


@dataclass(frozen=True)
class StabilityTable:
    """Per (size, region): median and best (lowest) rank across repeats."""

    sizes: tuple
    regions: tuple
    median_rank: np.ndarray  # shape (len(sizes), len(regions))
    best_rank: np.ndarray
    repeats: int
    seed: int

    def median_for(self, size, region):
        return float(self.median_rank[self.sizes.index(size), self.regions.index(region)])

    def best_for(self, size, region):
        return int(self.best_rank[self.sizes.index(size), self.regions.index(region)])


def rank_stability(matrix, sizes, repeats, annotation, params, seed, threads=1):
    """Per (size, repeat): stratified subsample, fit a forest on the whole
    subsample, rank regions; summarize each region's rank across repeats."""
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    n_labeled = len(matrix.labeled_row_indices())
    for s in sizes:
        if s > n_labeled:
            raise SizeExceedsDataset(f"size {s} exceeds {n_labeled} labeled rows")
    regions = tuple(annotation.regions() + [UNANNOTATED])

    cells = [(s, r) for s in sizes for r in range(repeats)]

    def run_cell(cell):
        s, r = cell
        sub_seed, _, forest_seed = cell_seeds(seed, s, r)
        rows = _stratified_subsample(matrix, s, sub_seed)
        model = fit_forest(matrix.subset(rows), replace(params, seed=forest_seed))
        ranking = rank_regions(model, matrix.vocabulary, annotation)
        return [ranking.rank_of(region) for region in regions]

    ranks = np.asarray(parallel_map(run_cell, cells, threads=threads), dtype=np.float64)
    ranks = ranks.reshape(len(sizes), repeats, len(regions))
    return StabilityTable(
        sizes=tuple(sizes),
        regions=regions,
        median_rank=np.median(ranks, axis=1),
        best_rank=ranks.min(axis=1).astype(np.int64),
        repeats=repeats,
        seed=seed,
    )


def cross_dataset_eval(train_matrix, test_matrix, params, threads=1):
    """Fit on all labeled rows of one corpus and evaluate on another that was
    built over the identical vocabulary."""
    if not train_matrix.vocabulary.same_as(test_matrix.vocabulary):
        raise VocabularyMismatch("train and test matrices use different vocabularies")
    model = fit_forest(train_matrix, params, threads=threads)
    rows = test_matrix.labeled_row_indices()
    sub = test_matrix.subset(rows)
    scores = forest_scores(model, sub)
    return _report_from_scores(sub, scores, np.arange(sub.n_rows), params.seed, "forest")


# --- delimited exports -------------------------------------------------------

def write_roc_tsv(curve, path):
    write_tsv(path, curve.points)


def write_curve_tsv(curve, path):
    write_tsv(
        path,
        zip(curve.sizes, curve.mean_accuracy, curve.std_accuracy),
    )


def write_ranking_tsv(ranking, path):
    write_tsv(path, ((i, r, v) for i, (r, v) in enumerate(ranking.entries, start=1)))


def write_stability_tsv(table, path):
    rows = []
    for i, size in enumerate(table.sizes):
        for j, region in enumerate(table.regions):
            rows.append((size, region, float(table.median_rank[i, j]), int(table.best_rank[i, j])))
    write_tsv(path, rows)
