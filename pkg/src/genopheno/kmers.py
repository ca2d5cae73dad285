"""Fixed-length k-mer extraction, counting, and corpus vocabulary construction.

K-mers are packed two bits per base (A=0, C=1, G=2, T=3, leftmost base in the
most significant pair) into unsigned 64-bit codes, which caps k at 32. Windows
containing any non-ACGT letter are skipped. With canonical counting (the
default) a k-mer and its reverse complement share one code, the numerically
smaller of the two, so assemblies from either strand produce the same table.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousBase,
    CorruptVocabularyFile,
    KTooLarge,
    MixedSpecs,
    NoValidBases,
)
from .util import parallel_map

MAX_K = 32

_BASE_BITS = {"A": 0, "C": 1, "G": 2, "T": 3}
_BITS_BASE = "ACGT"

# byte value -> 2-bit base code, 255 for anything that is not A/C/G/T
_LUT = np.full(256, 255, dtype=np.uint8)
for _b, _v in _BASE_BITS.items():
    _LUT[ord(_b)] = _v
    _LUT[ord(_b.lower())] = _v


@dataclass(frozen=True)
class KmerSpec:
    k: int
    canonical: bool = True

    def __post_init__(self):
        if self.k > MAX_K:
            raise KTooLarge(f"k={self.k} exceeds the 2-bit packing cap of {MAX_K}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def mask(self):
        return (1 << (2 * self.k)) - 1


def encode_kmer(bases):
    """Pack a length-k ACGT string into its integer code."""
    if isinstance(bases, (bytes, bytearray)):
        bases = bases.decode("ascii")
    if len(bases) > MAX_K:
        raise KTooLarge(f"k={len(bases)} exceeds {MAX_K}")
    code = 0
    for ch in bases:
        try:
            code = (code << 2) | _BASE_BITS[ch.upper()]
        except KeyError:
            raise AmbiguousBase(f"base {ch!r} is not one of A/C/G/T") from None
    return code


def decode_kmer(code, k):
    """Inverse of encode_kmer."""
    out = []
    for shift in range(2 * (k - 1), -1, -2):
        out.append(_BITS_BASE[(code >> shift) & 3])
    return "".join(out)


def reverse_complement(code, k):
    """Code of the base-wise complement read right to left; an involution."""
    rc = 0
    for _ in range(k):
        rc = (rc << 2) | (3 - (code & 3))
        code >>= 2
    return rc


def canonical(code, k):
    """The smaller of a code and its reverse complement; idempotent."""
    return min(code, reverse_complement(code, k))


@dataclass(frozen=True)
class KmerCounts:
    """Occurrence counts for one isolate: sorted codes with counts >= 1."""

    spec: KmerSpec
    codes: np.ndarray  # uint64, strictly ascending
    counts: np.ndarray  # int64, all >= 1

    def __len__(self):
        return len(self.codes)

    @property
    def total(self):
        return int(self.counts.sum())

    def get(self, code, default=0):
        i = np.searchsorted(self.codes, np.uint64(code))
        if i < len(self.codes) and self.codes[i] == np.uint64(code):
            return int(self.counts[i])
        return default

    def to_dict(self):
        return {int(c): int(n) for c, n in zip(self.codes, self.counts)}

    def to_text_dict(self):
        return {decode_kmer(int(c), self.spec.k): int(n) for c, n in zip(self.codes, self.counts)}


@dataclass(frozen=True)
class KmerHistogram:
    """bins[occurrence_count] = number of distinct k-mers seen that many times."""

    bins: dict

    @property
    def distinct_kmers(self):
        return sum(self.bins.values())

    @property
    def total_occurrences(self):
        return sum(k * v for k, v in self.bins.items())


@dataclass(frozen=True)
class KmerVocabulary:
    """Sorted corpus-wide code list; position in `codes` is the column index."""

    spec: KmerSpec
    codes: np.ndarray  # uint64, strictly ascending

    def __len__(self):
        return len(self.codes)

    def index_of(self, code):
        i = int(np.searchsorted(self.codes, np.uint64(code)))
        if i < len(self.codes) and self.codes[i] == np.uint64(code):
            return i
        raise KeyError(f"code {code} not in vocabulary")

    def columns_for(self, codes):
        """Vectorized code -> column mapping; raises KeyError on unknown codes."""
        codes = np.asarray(codes, dtype=np.uint64)
        idx = np.searchsorted(self.codes, codes)
        ok = (idx < len(self.codes)) & (self.codes[np.minimum(idx, len(self.codes) - 1)] == codes)
        if not ok.all():
            raise KeyError(f"{int((~ok).sum())} codes not in vocabulary")
        return idx.astype(np.int64)

    def same_as(self, other):
        return (
            self.spec == other.spec
            and len(self.codes) == len(other.codes)
            and bool(np.array_equal(self.codes, other.codes))
        )


def _window_codes(seq_bytes, spec):
    """Codes of all valid (ACGT-only) windows of one contig, in window order."""
    k = spec.k
    b = _LUT[np.frombuffer(seq_bytes, dtype=np.uint8)]
    n = len(b) - k + 1
    if n <= 0:
        return np.empty(0, dtype=np.uint64)
    invalid = (b == 255).astype(np.int32)
    run = np.cumsum(invalid)
    valid = (run[k - 1 :] - np.concatenate(([0], run[:-k]))) == 0
    b64 = b.astype(np.uint64)
    fwd = np.zeros(n, dtype=np.uint64)
    for j in range(k):
        fwd = (fwd << np.uint64(2)) | np.where(valid, b64[j : j + n], 0)
    if not spec.canonical:
        return fwd[valid]
    comp = np.where(b == 255, np.uint64(0), np.uint64(3) - b64)
    rev = np.zeros(n, dtype=np.uint64)
    for j in range(k):
        rev |= comp[j : j + n] << np.uint64(2 * j)
    return np.minimum(fwd, rev)[valid]


def count_kmers(isolate, spec):
    """Count every length-k window of every contig; windows never span contigs."""
    parts = [_window_codes(c.bases.encode("ascii"), spec) for c in isolate.contigs]
    allcodes = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint64)
    codes, counts = np.unique(allcodes, return_counts=True)
    return KmerCounts(spec, codes.astype(np.uint64), counts.astype(np.int64))


def gc_content(isolate):
    """(G+C) / (A+C+G+T) computed from 1-mer counts; IUPAC ambiguity ignored."""
    counts = count_kmers(isolate, KmerSpec(k=1, canonical=False))
    total = counts.total
    if total == 0:
        raise NoValidBases(f"isolate {isolate.isolate_id!r} contains no A/C/G/T bases")
    gc = counts.get(encode_kmer("G")) + counts.get(encode_kmer("C"))
    return gc / total


def histogram(counts):
    """Fold a count table into occurrence-count bins."""
    if len(counts) == 0:
        return KmerHistogram({})
    occ, num = np.unique(counts.counts, return_counts=True)
    return KmerHistogram({int(o): int(n) for o, n in zip(occ, num)})


def write_histogram_tsv(hist, path):
    """Two-column TSV (occurrence_count, num_kmers) sorted ascending."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for occ in sorted(hist.bins):
            fh.write(f"{occ}\t{hist.bins[occ]}\n")


def build_vocabulary(counts_per_isolate):
    """Sorted union of per-isolate code sets; its size is the corpus-level
    distinct-k-mer statistic."""
    counts_per_isolate = list(counts_per_isolate)
    if not counts_per_isolate:
        raise MixedSpecs("cannot build a vocabulary from zero count tables")
    spec = counts_per_isolate[0].spec
    for kc in counts_per_isolate:
        if kc.spec != spec:
            raise MixedSpecs(f"count tables mix specs {spec} and {kc.spec}")
    union = np.unique(np.concatenate([kc.codes for kc in counts_per_isolate]))
    return KmerVocabulary(spec, union.astype(np.uint64))


def count_dataset(dataset, spec, threads=1):
    """Per-isolate count tables, in dataset order; parallel across isolates."""
    return parallel_map(lambda iso: count_kmers(iso, spec), list(dataset.isolates), threads=threads)


VOCAB_MAGIC = b"KVOC1"


def write_vocabulary_block(vocab, fh):
    fh.write(VOCAB_MAGIC)
    fh.write(struct.pack("<BB", vocab.spec.k, 1 if vocab.spec.canonical else 0))
    fh.write(struct.pack("<Q", len(vocab.codes)))
    fh.write(vocab.codes.astype("<u8").tobytes())


def read_vocabulary_block(fh):
    head = fh.read(5)
    if head != VOCAB_MAGIC:
        raise CorruptVocabularyFile(f"bad vocabulary magic {head!r}")
    meta = fh.read(10)
    if len(meta) != 10:
        raise CorruptVocabularyFile("truncated vocabulary header")
    k, canon, n = struct.unpack("<BBQ", meta)
    raw = fh.read(8 * n)
    if len(raw) != 8 * n:
        raise CorruptVocabularyFile("truncated vocabulary code list")
    codes = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
    spec = KmerSpec(k=k, canonical=bool(canon))
    if len(codes) > 1 and not (codes[1:] > codes[:-1]).all():
        raise CorruptVocabularyFile("vocabulary codes are not strictly ascending")
    if len(codes) and int(codes[-1]) > spec.mask:
        raise CorruptVocabularyFile("vocabulary code exceeds 2k bits")
    return KmerVocabulary(spec, codes)


def save_vocabulary(vocab, path):
    with open(path, "wb") as fh:
        write_vocabulary_block(vocab, fh)


def load_vocabulary(path):
    with open(path, "rb") as fh:
        vocab = read_vocabulary_block(fh)
        if fh.read(1):
            raise CorruptVocabularyFile("trailing bytes after vocabulary block")
    return vocab
