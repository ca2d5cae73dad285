"""Column-oriented view of sparse training rows for exact threshold searches.

Entries are grouped by column and sorted by value within each column, so any
subset of rows keeps per-column value order and threshold enumeration needs no
per-node sorting. Absent entries are exact zeros; candidate thresholds sit at
midpoints between consecutive distinct observed values, including zero when
the column has any zero in the node.
"""

import numpy as np


def ranges(starts, lens):
    """Concatenation of arange(s, s+l) for each (s, l); lens must be >= 1."""
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    steps = np.ones(total, dtype=np.int64)
    steps[0] = starts[0]
    if len(starts) > 1:
        pos = np.cumsum(lens)[:-1]
        steps[pos] = starts[1:] - (starts[:-1] + lens[:-1]) + 1
    return np.cumsum(steps)


class ColumnStore:
    """Immutable (column, value)-sorted entry arrays over a fixed row set."""

    def __init__(self, indptr, indices, values, n_rows, n_features):
        nnz = len(indices)
        rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(indptr))
        order = np.lexsort((values, indices))
        self.entry_rows = rows[order].astype(np.int64)
        self.entry_vals = values[order].astype(np.float64)
        cols = indices[order]
        counts = np.bincount(cols, minlength=n_features) if nnz else np.zeros(n_features, np.int64)
        self.col_indptr = np.zeros(n_features + 1, dtype=np.int64)
        np.cumsum(counts, out=self.col_indptr[1:])
        self.n_rows = n_rows
        self.n_features = n_features

    def gather(self, candidates):
        """Entry positions of the candidate columns, preserving (col, value) order.

        Returns (flat entry positions, candidate slot per entry).
        """
        starts = self.col_indptr[candidates]
        lens = self.col_indptr[candidates + 1] - starts
        nz = lens > 0
        flat = ranges(starts[nz], lens[nz])
        slot = np.repeat(np.flatnonzero(nz), lens[nz])
        return flat, slot

    def column(self, j):
        lo, hi = self.col_indptr[j], self.col_indptr[j + 1]
        return self.entry_rows[lo:hi], self.entry_vals[lo:hi]
