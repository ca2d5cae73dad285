"""Multi-command pipeline executable.

Subcommands: synth, count, matrix, train, eval, learning-curve, regions,
stability. Every option can come from a key=value --config file (explicit
flags win), every run writes a <command>.manifest.cfg next to its outputs, and
re-running from that manifest reproduces the outputs byte for byte. All
randomness flows from --seed; --threads only changes wall time, never bytes.
Exit codes: 0 success, 1 domain error (one `Code: message` line on stderr),
2 usage error.
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .boost import BOOST_MAGIC, boost_scores, fit_adaboost, load_boost, save_boost
from .errors import CorruptModelFile, FeatureCountMismatch, PipelineError
from .evaluation import (
    EvalReport,
    SplitSpec,
    cross_dataset_eval,
    evaluate_split,
    learning_curve,
    load_region_annotation,
    rank_regions,
    rank_stability,
    write_curve_tsv,
    write_ranking_tsv,
    write_roc_tsv,
    write_stability_tsv,
    _report_from_scores,
)
from .forest import FOREST_MAGIC, ForestParams, fit_forest, forest_scores, load_forest, save_forest
from .kmers import KmerSpec, count_kmers, decode_kmer, histogram, write_histogram_tsv
from .linear import LINEAR_MAGIC, fit_l1_linear, linear_scores, load_linear, save_linear
from .matrix import binarize, build_matrix, load_matrix, save_matrix
from .sequences import assemble_dataset, load_labels, parse_fasta
from .synth import SynthSpec, generate, write_corpus
from .util import parallel_map


@dataclass(frozen=True)
class Opt:
    flags: tuple
    dest: str
    typ: str  # int | float | str | bool | intlist | strlist | choice:<a,b,c>
    default: object
    help: str
    required: bool = False


_COMMON = [
    Opt(("--out-dir",), "out_dir", "str", ".", "directory for outputs and the manifest"),
    Opt(("--threads",), "threads", "int", 1, "worker threads; results are identical for any value"),
    Opt(("--config",), "config", "str", None, "key=value file supplying defaults for any option"),
]

_FIGS = Opt(("--figures",), "figures", "bool", True, "render figures next to the TSV outputs")

_FOREST = [
    Opt(("--n-trees",), "n_trees", "int", 100, "number of trees"),
    Opt(("--max-features",), "max_features", "str", "sqrt", "candidates per node: sqrt, all, or a count"),
    Opt(("--bootstrap",), "bootstrap", "bool", True, "bootstrap-resample rows per tree"),
    Opt(("--max-depth",), "max_depth", "int", None, "depth cap (default unlimited)"),
    Opt(("--min-samples-split",), "min_samples_split", "int", 2, "minimum samples to split a node"),
]

_SEED = Opt(("--seed",), "seed", "int", 0, "root seed for all randomness")

COMMANDS = {
    "synth": [
        *_COMMON,
        _SEED,
        Opt(("--n-isolates",), "n_isolates", "int", 200, "number of isolates"),
        Opt(("--contigs",), "contigs", "int", 1, "contigs per isolate"),
        Opt(("--contig-length",), "contig_length", "int", 5000, "bases per contig"),
        Opt(("--resistant-fraction",), "resistant_fraction", "float", 0.5, "P(label = RES)"),
        Opt(("--marker",), "marker", "str", None, "planted marker k-mer (default: drawn from the seed)"),
        Opt(("--marker-length",), "marker_length", "int", 10, "marker length when drawn from the seed"),
        Opt(("--presence-res",), "presence_res", "float", 0.95, "P(marker | RES)"),
        Opt(("--presence-sus",), "presence_sus", "float", 0.05, "P(marker | SUS)"),
        Opt(("--gc",), "gc", "float", 0.5, "background GC fraction"),
    ],
    "count": [
        *_COMMON,
        _FIGS,
        Opt(("--fasta",), "fasta", "strlist", None, "FASTA files (one isolate each)", required=True),
        Opt(("--k",), "k", "int", None, "k-mer length", required=True),
        Opt(("--canonical",), "canonical", "bool", True, "fold reverse complements together"),
    ],
    "matrix": [
        *_COMMON,
        Opt(("--fasta",), "fasta", "strlist", None, "FASTA files or directories", required=True),
        Opt(("--labels",), "labels", "str", None, "two-column isolate/phenotype TSV"),
        Opt(("--k",), "k", "int", None, "k-mer length", required=True),
        Opt(("--canonical",), "canonical", "bool", True, "fold reverse complements together"),
        Opt(("--binarize",), "binarize", "bool", False, "store presence/absence instead of counts"),
        Opt(("--out",), "out", "str", None, "output matrix path (default <out-dir>/matrix.kmat)"),
    ],
    "train": [
        *_COMMON,
        _SEED,
        *_FOREST,
        Opt(("--matrix",), "matrix", "str", None, "input matrix file", required=True),
        Opt(("--algorithm",), "algorithm", "choice:forest,adaboost,lasso", "forest", "learner"),
        Opt(("--rounds",), "rounds", "int", 50, "boosting rounds"),
        Opt(("--lasso-lambda",), "lasso_lambda", "float", 0.01, "L1 penalty strength"),
        Opt(("--max-iters",), "max_iters", "int", 1000, "coordinate-descent sweep cap"),
        Opt(("--tolerance",), "tolerance", "float", 1e-8, "coordinate-descent stop tolerance"),
        Opt(("--binarize",), "binarize", "bool", False, "binarize counts before training"),
        Opt(("--out",), "out", "str", None, "output model path (default <out-dir>/model.<ext>)"),
    ],
    "eval": [
        *_COMMON,
        _SEED,
        _FIGS,
        *_FOREST,
        Opt(("--matrix",), "matrix", "str", None, "matrix to evaluate on", required=True),
        Opt(("--model",), "model", "str", None, "pre-trained model; scores all labeled rows"),
        Opt(("--test-matrix",), "test_matrix", "str", None, "second corpus for cross-dataset evaluation"),
        Opt(("--test-fraction",), "test_fraction", "float", 0.2, "holdout fraction"),
        Opt(("--stratified",), "stratified", "bool", True, "stratify the holdout split"),
        Opt(("--binarize",), "binarize", "bool", False, "binarize counts before evaluating"),
    ],
    "learning-curve": [
        *_COMMON,
        _SEED,
        _FIGS,
        *_FOREST,
        Opt(("--matrix",), "matrix", "str", None, "input matrix file", required=True),
        Opt(("--sizes",), "sizes", "intlist", None, "ascending subsample sizes", required=True),
        Opt(("--repeats",), "repeats", "int", 10, "repeats per size"),
        Opt(("--protocol",), "protocol", "choice:resample,fixed-test", "resample",
            "resample: split inside each subsample; fixed-test: one shared holdout"),
    ],
    "regions": [
        *_COMMON,
        _FIGS,
        Opt(("--model",), "model", "str", None, "trained forest model", required=True),
        Opt(("--matrix",), "matrix", "str", None, "matrix supplying the vocabulary", required=True),
        Opt(("--annotation",), "annotation", "str", None, "k-mer to region TSV", required=True),
        Opt(("--top",), "top", "int", 20, "regions to keep in the ranking"),
    ],
    "stability": [
        *_COMMON,
        _SEED,
        _FIGS,
        *_FOREST,
        Opt(("--matrix",), "matrix", "str", None, "input matrix file", required=True),
        Opt(("--annotation",), "annotation", "str", None, "k-mer to region TSV", required=True),
        Opt(("--sizes",), "sizes", "intlist", None, "ascending subsample sizes", required=True),
        Opt(("--repeats",), "repeats", "int", 10, "repeats per size"),
    ],
}


def _convert(opt, text):
    t = opt.typ
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    if t == "bool":
        if str(text).lower() in ("1", "true", "yes", "on"):
            return True
        if str(text).lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean {text!r} for --{opt.dest}")
    if t == "intlist":
        return [int(x) for x in str(text).split(",") if x != ""]
    if t == "strlist":
        return [x for x in str(text).split(",") if x != ""]
    if t.startswith("choice:"):
        choices = t.split(":", 1)[1].split(",")
        if text not in choices:
            raise ValueError(f"{text!r} is not one of {choices}")
        return text
    return text


def _build_parser():
    parser = argparse.ArgumentParser(prog="genopheno", description=__doc__)
    parser.add_argument("--version", action="version", version=f"genopheno {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        sp = subs.add_parser(name)
        for opt in opts:
            if opt.typ == "bool":
                group = sp.add_mutually_exclusive_group()
                group.add_argument(opt.flags[0], dest=opt.dest, action="store_const", const=True,
                                   default=None, help=opt.help)
                no_flag = "--no-" + opt.flags[0].lstrip("-")
                group.add_argument(no_flag, dest=opt.dest, action="store_const", const=False,
                                   default=None, help=argparse.SUPPRESS)
            elif opt.typ in ("intlist", "strlist"):
                sp.add_argument(opt.flags[0], dest=opt.dest, nargs="+", default=None, help=opt.help)
            else:
                sp.add_argument(opt.flags[0], dest=opt.dest, default=None, help=opt.help)
    return parser


def _read_config(path):
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def _resolve(command, args):
    """Merge CLI values over config-file values over defaults."""
    opts = {o.dest: o for o in COMMANDS[command]}
    cfg = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        raw = _read_config(cfg_path)
        cmd = raw.pop("command", command)
        if cmd != command:
            raise ValueError(f"config file is for command {cmd!r}, not {command!r}")
        raw.pop("version", None)
        for key, value in raw.items():
            if key not in opts:
                raise ValueError(f"config key {key!r} is not an option of {command!r}")
            cfg[key] = _convert(opts[key], value)
    resolved = {}
    for dest, opt in opts.items():
        cli_val = getattr(args, dest, None)
        if cli_val is not None:
            if isinstance(cli_val, list):
                flat = []
                for item in cli_val:
                    flat.extend(_convert(opt, item) if isinstance(item, str) else [item])
                resolved[dest] = flat
            elif isinstance(cli_val, str):
                resolved[dest] = _convert(opt, cli_val)
            else:
                resolved[dest] = cli_val
        elif dest in cfg:
            resolved[dest] = cfg[dest]
        else:
            resolved[dest] = opt.default
    for dest, opt in opts.items():
        if opt.required and resolved[dest] is None:
            raise ValueError(f"--{dest.replace('_', '-')} is required (flag or config)")
    return resolved


def _manifest_text(command, resolved):
    lines = [f"command={command}", f"version={__version__}"]
    for key in sorted(resolved):
        if key == "config":
            continue
        val = resolved[key]
        if val is None:
            continue
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, list):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"


def _write_manifest(command, resolved, out_dir):
    path = Path(out_dir) / f"{command}.manifest.cfg"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_manifest_text(command, resolved))


def _out_dir(resolved):
    out = Path(resolved["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _expand_fasta_inputs(items):
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            found = sorted(q for ext in ("*.fa", "*.fasta", "*.fna") for q in p.glob(ext))
            paths.extend(found)
        else:
            paths.append(p)
    return paths


def _forest_params(r):
    mf = r["max_features"]
    if isinstance(mf, str) and mf not in ("sqrt", "all"):
        mf = int(mf)
    return ForestParams(
        n_trees=r["n_trees"],
        max_features=mf,
        bootstrap=r["bootstrap"],
        max_depth=r["max_depth"],
        min_samples_split=r["min_samples_split"],
        seed=r["seed"],
    )


def _load_any_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(5)
    if magic == FOREST_MAGIC:
        return "forest", load_forest(path)
    if magic == BOOST_MAGIC:
        return "adaboost", load_boost(path)
    if magic == LINEAR_MAGIC:
        return "lasso", load_linear(path)
    raise CorruptModelFile(f"unrecognized model magic {magic!r}")


_SCORERS = {"forest": forest_scores, "adaboost": boost_scores, "lasso": linear_scores}


def cmd_synth(args):
    r = _resolve("synth", args)
    out = _out_dir(r)
    marker = r["marker"]
    if marker is None:
        from .util import derived_rng

        rng = derived_rng(r["seed"], 999)
        marker = "".join("ACGT"[i] for i in rng.integers(0, 4, size=r["marker_length"]))
        r["marker"] = marker
    spec = SynthSpec(
        n_isolates=r["n_isolates"],
        contig_length=r["contig_length"],
        marker=marker,
        n_contigs_per_isolate=r["contigs"],
        resistant_fraction=r["resistant_fraction"],
        marker_presence_in_res=r["presence_res"],
        marker_presence_in_sus=r["presence_sus"],
        background_gc=r["gc"],
        seed=r["seed"],
    )
    dataset, _, truth = generate(spec)
    write_corpus(dataset, marker, truth, out)
    _write_manifest("synth", r, out)
    n_sus, n_res, n_unl = dataset.class_counts()
    print(f"synth: wrote {len(dataset)} isolates (SUS={n_sus} RES={n_res}) marker={marker} -> {out}")
    return 0


def cmd_count(args):
    r = _resolve("count", args)
    out = _out_dir(r)
    spec = KmerSpec(k=r["k"], canonical=r["canonical"])
    paths = _expand_fasta_inputs(r["fasta"])

    def one(path):
        with open(path, "rb") as fh:
            contigs = parse_fasta(fh)
        from .sequences import Isolate

        iso = Isolate(Path(path).stem, tuple(contigs))
        return iso.isolate_id, count_kmers(iso, spec)

    results = parallel_map(one, paths, threads=r["threads"])
    for isolate_id, counts in results:
        counts_path = out / f"{isolate_id}.counts.tsv"
        with open(counts_path, "w", encoding="utf-8", newline="\n") as fh:
            for code, cnt in zip(counts.codes, counts.counts):
                fh.write(f"{decode_kmer(int(code), spec.k)}\t{int(cnt)}\n")
        hist = histogram(counts)
        write_histogram_tsv(hist, out / f"{isolate_id}.hist.tsv")
        if r["figures"]:
            from .figures import save_histogram_figure

            save_histogram_figure(hist, out / f"{isolate_id}.hist.png",
                                  title=f"k-mer occurrences: {isolate_id} (k={spec.k})")
        print(f"count: {isolate_id} distinct={len(counts)} total={counts.total}")
    _write_manifest("count", r, out)
    return 0


def cmd_matrix(args):
    r = _resolve("matrix", args)
    out = _out_dir(r)
    spec = KmerSpec(k=r["k"], canonical=r["canonical"])
    paths = _expand_fasta_inputs(r["fasta"])
    labels = {}
    if r["labels"]:
        with open(r["labels"], "rb") as fh:
            labels = load_labels(fh)
    dataset = assemble_dataset(paths, labels, threads=r["threads"])
    m = build_matrix(dataset, spec, threads=r["threads"])
    if r["binarize"]:
        m = binarize(m)
    out_path = Path(r["out"]) if r["out"] else out / "matrix.kmat"
    r["out"] = str(out_path)
    save_matrix(m, out_path)
    _write_manifest("matrix", r, out)
    n_sus, n_res, n_unl = (int(dataset.metadata[k]) for k in ("n_sus", "n_res", "n_unlabeled"))
    print(f"matrix: vocabulary_size={m.n_features} isolates={m.n_rows} "
          f"SUS={n_sus} RES={n_res} unlabeled={n_unl} -> {out_path}")
    return 0


def cmd_train(args):
    r = _resolve("train", args)
    out = _out_dir(r)
    m = load_matrix(r["matrix"])
    if r["binarize"]:
        m = binarize(m)
    algo = r["algorithm"]
    ext = {"forest": "kfor", "adaboost": "kada", "lasso": "klin"}[algo]
    out_path = Path(r["out"]) if r["out"] else out / f"model.{ext}"
    r["out"] = str(out_path)
    if algo == "forest":
        model = fit_forest(m, _forest_params(r), threads=r["threads"])
        save_forest(model, out_path)
        detail = f"trees={len(model.trees)}"
    elif algo == "adaboost":
        model = fit_adaboost(m, n_rounds=r["rounds"], seed=r["seed"])
        save_boost(model, out_path)
        detail = f"stumps={len(model.stumps)}"
    else:
        model = fit_l1_linear(m, lam=r["lasso_lambda"], max_iters=r["max_iters"],
                              tolerance=r["tolerance"])
        save_linear(model, out_path)
        detail = f"nonzero={model.nonzero_count()} sweeps={model.n_sweeps}"
    _write_manifest("train", r, out)
    print(f"train: {algo} {detail} -> {out_path}")
    return 0


def cmd_eval(args):
    r = _resolve("eval", args)
    out = _out_dir(r)
    if r["model"] and r["test_matrix"]:
        raise ValueError("--model and --test-matrix are mutually exclusive")
    m = load_matrix(r["matrix"])
    if r["binarize"]:
        m = binarize(m)
    if r["model"]:
        algo, model = _load_any_model(r["model"])
        if model.n_features != m.n_features:
            raise FeatureCountMismatch(
                f"matrix has {m.n_features} features but model expects {model.n_features}"
            )
        rows = m.labeled_row_indices()
        sub = m.subset(rows)
        scores = _SCORERS[algo](model, sub)
        report = _report_from_scores(sub, scores, np.arange(sub.n_rows), r["seed"], algo)
    elif r["test_matrix"]:
        t = load_matrix(r["test_matrix"])
        if r["binarize"]:
            t = binarize(t)
        report = cross_dataset_eval(m, t, _forest_params(r), threads=r["threads"])
    else:
        split = SplitSpec(test_fraction=r["test_fraction"], stratified=r["stratified"], seed=r["seed"])
        report = evaluate_split(m, split, _forest_params(r), threads=r["threads"])
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    if report.roc_points:
        curve = roc_curve_from_report(report)
        write_roc_tsv(curve, out / "roc.tsv")
        if r["figures"]:
            from .figures import save_roc_figure

            save_roc_figure(curve, out / "roc.png", label=report.algorithm)
    _write_manifest("eval", r, out)
    auc_text = "n/a" if report.auc is None else f"{report.auc:.6f}"
    print(f"eval: algorithm={report.algorithm} n={report.n_isolates} "
          f"accuracy={report.accuracy:.6f} auc={auc_text}")
    return 0


def roc_curve_from_report(report):
    from .evaluation import RocCurve

    return RocCurve(points=report.roc_points, auc=report.auc)


def cmd_learning_curve(args):
    r = _resolve("learning-curve", args)
    out = _out_dir(r)
    m = load_matrix(r["matrix"])
    curve = learning_curve(m, r["sizes"], r["repeats"], _forest_params(r), r["seed"],
                           threads=r["threads"], protocol=r["protocol"])
    write_curve_tsv(curve, out / "curve.tsv")
    report = EvalReport(
        k=m.vocabulary.spec.k,
        canonical=m.vocabulary.spec.canonical,
        n_isolates=len(m.labeled_row_indices()),
        n_features=m.n_features,
        seed=r["seed"],
        algorithm="forest",
        accuracy=None,
        auc=None,
        roc_points=(),
        curve=curve,
    )
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    if r["figures"]:
        from .figures import save_curve_figure

        save_curve_figure(curve, out / "curve.png")
    _write_manifest("learning-curve", r, out)
    for size, mean, std in zip(curve.sizes, curve.mean_accuracy, curve.std_accuracy):
        print(f"learning-curve: size={size} mean={mean:.6f} std={std:.6f}")
    return 0


def cmd_regions(args):
    r = _resolve("regions", args)
    out = _out_dir(r)
    m = load_matrix(r["matrix"])
    algo, model = _load_any_model(r["model"])
    if algo != "forest":
        raise ValueError("regions requires a forest model (feature importances)")
    with open(r["annotation"], "rb") as fh:
        annotation = load_region_annotation(fh, m.vocabulary.spec)
    ranking = rank_regions(model, m.vocabulary, annotation, top_n=r["top"])
    write_ranking_tsv(ranking, out / "regions.tsv")
    report = EvalReport(
        k=m.vocabulary.spec.k,
        canonical=m.vocabulary.spec.canonical,
        n_isolates=len(m.labeled_row_indices()),
        n_features=m.n_features,
        seed=0,
        algorithm="forest",
        accuracy=None,
        auc=None,
        roc_points=(),
        top_regions=ranking.entries,
    )
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    if r["figures"]:
        from .figures import save_ranking_figure

        save_ranking_figure(ranking, out / "regions.png", top_n=r["top"])
    _write_manifest("regions", r, out)
    for i, (region, imp) in enumerate(ranking.entries, start=1):
        print(f"regions: rank={i} region={region} importance={imp:.6f}")
    return 0


def cmd_stability(args):
    r = _resolve("stability", args)
    out = _out_dir(r)
    m = load_matrix(r["matrix"])
    with open(r["annotation"], "rb") as fh:
        annotation = load_region_annotation(fh, m.vocabulary.spec)
    table = rank_stability(m, r["sizes"], r["repeats"], annotation, _forest_params(r), r["seed"],
                           threads=r["threads"])
    write_stability_tsv(table, out / "stability.tsv")
    if r["figures"]:
        from .figures import save_stability_figure

        save_stability_figure(table, out / "stability.png")
    _write_manifest("stability", r, out)
    for i, size in enumerate(table.sizes):
        best_region = table.regions[int(np.argmin(table.median_rank[i]))]
        print(f"stability: size={size} top_region={best_region}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "count": cmd_count,
    "matrix": cmd_matrix,
    "train": cmd_train,
    "eval": cmd_eval,
    "learning-curve": cmd_learning_curve,
    "regions": cmd_regions,
    "stability": cmd_stability,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except PipelineError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
