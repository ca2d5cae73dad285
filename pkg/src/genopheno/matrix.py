"""Sparse isolate-by-k-mer count matrix with a stable column order and an exact
binary file format.

Rows are CSR-style (indptr/indices/values); column order is ascending k-mer
code, so feature indices are reproducible across runs and machines. Counts are
kept as raw occurrences unless binarized.
"""

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import CorruptMatrixFile, CountOverflow, EmptyDataset
from .kmers import (
    KmerSpec,
    KmerVocabulary,
    build_vocabulary,
    count_dataset,
    read_vocabulary_block,
    write_vocabulary_block,
)
from .sequences import Phenotype

_NO_LABEL = -1
_NO_LABEL_BYTE = 255
_MAX_COUNT = 2**32 - 1

MATRIX_MAGIC = b"KMAT1"


@dataclass(frozen=True)
class FeatureMatrix:
    vocabulary: KmerVocabulary
    row_ids: tuple
    indptr: np.ndarray  # int64, len n_rows + 1
    indices: np.ndarray  # int64, strictly ascending within a row
    values: np.ndarray  # int64, all > 0
    labels: np.ndarray | None  # int8 per row: 0=SUS, 1=RES, -1=unlabeled
    binarized: bool = False

    @property
    def n_rows(self):
        return len(self.row_ids)

    @property
    def n_features(self):
        return len(self.vocabulary.codes)

    def row(self, i):
        """(column indices, counts) of row i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def label_of(self, i):
        if self.labels is None or self.labels[i] == _NO_LABEL:
            return None
        return Phenotype(int(self.labels[i]))

    def labeled_row_indices(self):
        if self.labels is None:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.labels != _NO_LABEL).astype(np.int64)

    def subset(self, rows):
        """New matrix over the given rows (kept in the given order), same vocabulary."""
        rows = np.asarray(rows, dtype=np.int64)
        lens = (self.indptr[rows + 1] - self.indptr[rows]).astype(np.int64)
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        take = np.concatenate(
            [np.arange(self.indptr[r], self.indptr[r + 1]) for r in rows]
        ) if len(rows) else np.empty(0, dtype=np.int64)
        return FeatureMatrix(
            vocabulary=self.vocabulary,
            row_ids=tuple(self.row_ids[i] for i in rows),
            indptr=indptr,
            indices=self.indices[take],
            values=self.values[take],
            labels=None if self.labels is None else self.labels[rows],
            binarized=self.binarized,
        )

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_features), dtype=np.int64)
        for i in range(self.n_rows):
            idx, val = self.row(i)
            out[i, idx] = val
        return out

    @staticmethod
    def from_dense(dense, labels=None, row_ids=None, vocabulary=None):
        """Build a matrix from a dense array; fixtures get a synthetic vocabulary
        of consecutive codes."""
        dense = np.asarray(dense)
        n, p = dense.shape
        if vocabulary is None:
            k = max(1, math.ceil(math.log(max(p, 2), 4)))
            vocabulary = KmerVocabulary(KmerSpec(k=k, canonical=False), np.arange(p, dtype=np.uint64))
        indptr = [0]
        indices = []
        values = []
        for i in range(n):
            nz = np.flatnonzero(dense[i])
            indices.append(nz)
            values.append(dense[i, nz])
            indptr.append(indptr[-1] + len(nz))
        lab = None
        if labels is not None:
            lab = np.array([_NO_LABEL if l is None else int(l) for l in labels], dtype=np.int8)
        return FeatureMatrix(
            vocabulary=vocabulary,
            row_ids=tuple(row_ids or (f"row{i}" for i in range(n))),
            indptr=np.asarray(indptr, dtype=np.int64),
            indices=np.concatenate(indices).astype(np.int64) if indices else np.empty(0, np.int64),
            values=np.concatenate(values).astype(np.int64) if values else np.empty(0, np.int64),
            labels=lab,
        )


def build_matrix(dataset, spec, threads=1):
    """Count every isolate, build the union vocabulary, and project the counts
    into sparse rows. Row order follows the dataset's isolate order."""
    if len(dataset) == 0:
        raise EmptyDataset("cannot build a matrix from an empty dataset")
    per_isolate = count_dataset(dataset, spec, threads=threads)
    vocab = build_vocabulary(per_isolate)
    indptr = np.zeros(len(per_isolate) + 1, dtype=np.int64)
    cols = []
    vals = []
    for i, kc in enumerate(per_isolate):
        cols.append(np.searchsorted(vocab.codes, kc.codes).astype(np.int64))
        vals.append(kc.counts.astype(np.int64))
        indptr[i + 1] = indptr[i] + len(kc.codes)
    values = np.concatenate(vals) if vals else np.empty(0, np.int64)
    if len(values) and int(values.max()) > _MAX_COUNT:
        raise CountOverflow(f"a k-mer count exceeds {_MAX_COUNT}")
    labels = np.array(
        [_NO_LABEL if iso.label is None else int(iso.label) for iso in dataset.isolates],
        dtype=np.int8,
    )
    return FeatureMatrix(
        vocabulary=vocab,
        row_ids=tuple(iso.isolate_id for iso in dataset.isolates),
        indptr=indptr,
        indices=np.concatenate(cols) if cols else np.empty(0, np.int64),
        values=values,
        labels=labels,
    )


def binarize(matrix):
    """Presence/absence variant: every stored count becomes 1, pattern unchanged."""
    return replace(matrix, values=np.ones_like(matrix.values), binarized=True)


def save_matrix(matrix, path):
    """KMAT1 format: magic, flags byte, embedded KVOC1 vocabulary block, row
    count, then per row the length-prefixed id, label byte, nnz, and
    (index, count) 32-bit pairs. All integers little-endian."""
    if len(matrix.values) and int(matrix.values.max()) > _MAX_COUNT:
        raise CountOverflow(f"a stored count exceeds {_MAX_COUNT}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<B", 1 if matrix.binarized else 0))
        write_vocabulary_block(matrix.vocabulary, fh)
        fh.write(struct.pack("<Q", matrix.n_rows))
        for i in range(matrix.n_rows):
            rid = matrix.row_ids[i].encode("utf-8")
            fh.write(struct.pack("<I", len(rid)))
            fh.write(rid)
            lab = matrix.label_of(i)
            fh.write(struct.pack("<B", _NO_LABEL_BYTE if lab is None else int(lab)))
            idx, val = matrix.row(i)
            fh.write(struct.pack("<I", len(idx)))
            pairs = np.empty(2 * len(idx), dtype="<u4")
            pairs[0::2] = idx.astype("<u4")
            pairs[1::2] = val.astype("<u4")
            fh.write(pairs.tobytes())


def _need(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise CorruptMatrixFile(f"truncated matrix file while reading {what}")
    return raw


def load_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(5) != MATRIX_MAGIC:
            raise CorruptMatrixFile("bad matrix magic")
        (flags,) = struct.unpack("<B", _need(fh, 1, "flags"))
        if flags > 1:
            raise CorruptMatrixFile(f"unknown flags byte {flags}")
        try:
            vocab = read_vocabulary_block(fh)
        except Exception as exc:
            raise CorruptMatrixFile(f"bad embedded vocabulary: {exc}") from exc
        (n_rows,) = struct.unpack("<Q", _need(fh, 8, "row count"))
        row_ids = []
        labels = np.empty(n_rows, dtype=np.int8)
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        chunks_idx = []
        chunks_val = []
        for i in range(n_rows):
            (id_len,) = struct.unpack("<I", _need(fh, 4, "id length"))
            row_ids.append(_need(fh, id_len, "isolate id").decode("utf-8"))
            (lab,) = struct.unpack("<B", _need(fh, 1, "label byte"))
            if lab not in (0, 1, _NO_LABEL_BYTE):
                raise CorruptMatrixFile(f"bad label byte {lab} in row {i}")
            labels[i] = _NO_LABEL if lab == _NO_LABEL_BYTE else lab
            (nnz,) = struct.unpack("<I", _need(fh, 4, "nnz"))
            pairs = np.frombuffer(_need(fh, 8 * nnz, "row entries"), dtype="<u4")
            idx = pairs[0::2].astype(np.int64)
            val = pairs[1::2].astype(np.int64)
            if len(idx):
                if int(idx.max()) >= len(vocab.codes):
                    raise CorruptMatrixFile(f"column index out of range in row {i}")
                if len(idx) > 1 and not (idx[1:] > idx[:-1]).all():
                    raise CorruptMatrixFile(f"column indices not ascending in row {i}")
                if int(val.min()) < 1:
                    raise CorruptMatrixFile(f"zero count stored in row {i}")
            chunks_idx.append(idx)
            chunks_val.append(val)
            indptr[i + 1] = indptr[i] + nnz
        if fh.read(1):
            raise CorruptMatrixFile("trailing bytes after last row")
    return FeatureMatrix(
        vocabulary=vocab,
        row_ids=tuple(row_ids),
        indptr=indptr,
        indices=np.concatenate(chunks_idx) if chunks_idx else np.empty(0, np.int64),
        values=np.concatenate(chunks_val) if chunks_val else np.empty(0, np.int64),
        labels=labels,
        binarized=bool(flags & 1),
    )


def matrices_equal(a, b):
    """Exact equality of codes, rows, labels, and flags."""
    return (
        a.vocabulary.same_as(b.vocabulary)
        and a.row_ids == b.row_ids
        and np.array_equal(a.indptr, b.indptr)
        and np.array_equal(a.indices, b.indices)
        and np.array_equal(a.values, b.values)
        and (
            (a.labels is None and b.labels is None)
            or (a.labels is not None and b.labels is not None and np.array_equal(a.labels, b.labels))
        )
        and a.binarized == b.binarized
    )
