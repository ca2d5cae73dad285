"""Shared helpers: seed derivation, deterministic parallel mapping, text output."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def derived_rng(seed, *key):
    """Generator seeded deterministically from a root seed and an integer key path.

    The same (seed, key) always yields the same stream, independent of thread
    scheduling, so parallel and serial runs agree bit for bit.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derived_seed(seed, *key):
    """Collapse (seed, key path) into a single 63-bit integer seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def parallel_map(fn, items, threads=1):
    """Map fn over items, optionally on a thread pool; results keep item order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt_value(v):
    """Fixed text form for TSV/JSON cells: shortest round-trip repr for floats."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_tsv(path, rows):
    """Write rows (iterables of cells) as headerless LF-terminated TSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(fmt_value(c) for c in row))
            fh.write("\n")
