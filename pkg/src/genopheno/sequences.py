"""FASTA contig and phenotype label ingestion.

One FASTA file holds the assembled contigs of one isolate; labels arrive as a
two-column TSV of (isolate_id, SUS|RES). All parsed values are immutable and
safe to share across threads.
"""

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConflictingLabel,
    DuplicateIsolateId,
    EmptyDataset,
    MalformedFasta,
    MalformedLabelTable,
    UnknownPhenotype,
)
from .util import parallel_map

# DNA IUPAC codes accepted on input; only ACGT take part in k-mer extraction
IUPAC_LETTERS = b"ACGTRYSWKMBDHVN"

_NON_IUPAC = re.compile(b"[^" + IUPAC_LETTERS + b"]")


class Phenotype(enum.IntEnum):
    SUS = 0
    RES = 1

    @classmethod
    def parse(cls, token):
        t = token.strip().upper()
        if t == "SUS":
            return cls.SUS
        if t == "RES":
            return cls.RES
        raise UnknownPhenotype(f"phenotype token {token!r} is not SUS or RES")


@dataclass(frozen=True)
class Contig:
    id: str
    bases: str  # uppercase IUPAC letters


@dataclass(frozen=True)
class Isolate:
    isolate_id: str
    contigs: tuple
    label: Phenotype | None = None

    def __post_init__(self):
        if not self.contigs:
            raise MalformedFasta(f"isolate {self.isolate_id!r} has no contigs")
        seen = set()
        for c in self.contigs:
            if c.id in seen:
                raise MalformedFasta(f"duplicate contig id {c.id!r} in isolate {self.isolate_id!r}")
            seen.add(c.id)

    def with_label(self, label):
        return Isolate(self.isolate_id, self.contigs, label)


@dataclass(frozen=True)
class Dataset:
    isolates: tuple
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.isolates)

    def class_counts(self):
        """Return (n_sus, n_res, n_unlabeled); the three always sum to len(self)."""
        n_sus = sum(1 for iso in self.isolates if iso.label == Phenotype.SUS)
        n_res = sum(1 for iso in self.isolates if iso.label == Phenotype.RES)
        return n_sus, n_res, len(self.isolates) - n_sus - n_res


def parse_fasta(stream):
    """Parse '>'-headed records from bytes or a binary file object.

    Sequence lines are concatenated with all whitespace stripped and letters
    uppercased; the id is the header text up to the first whitespace. Raises
    MalformedFasta with the byte offset and record id on bad input.
    """
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(data, str):
        data = data.encode()

    contigs = []
    cur_id = None
    cur_parts = []
    cur_offset = 0

    def flush():
        if cur_id is None:
            return
        seq = b"".join(cur_parts).upper()
        if not seq:
            raise MalformedFasta(f"record {cur_id!r} at offset {cur_offset} has an empty sequence")
        bad = _NON_IUPAC.search(seq)
        if bad:
            raise MalformedFasta(
                f"record {cur_id!r}: non-IUPAC character {chr(bad.group()[0])!r} in sequence"
            )
        contigs.append(Contig(cur_id, seq.decode("ascii")))

    offset = 0
    for raw in data.split(b"\n"):
        line = raw.strip()
        if line:
            if line.startswith(b">"):
                flush()
                cur_id = line[1:].split(None, 1)[0].decode("utf-8", "replace") if line[1:].strip() else ""
                if not cur_id:
                    raise MalformedFasta(f"empty header id at offset {offset}")
                cur_parts = []
                cur_offset = offset
            elif cur_id is None:
                raise MalformedFasta(f"sequence before first header at offset {offset}")
            else:
                cur_parts.append(b"".join(line.split()))
        offset += len(raw) + 1
    flush()
    if not contigs:
        raise MalformedFasta("no records found" if not data.strip() else "no '>' header found")
    return contigs


def write_fasta(contigs, path_or_stream, width=70):
    """Inverse of parse_fasta: wrapped records whose re-parse is identical."""
    own = isinstance(path_or_stream, (str, Path))
    fh = open(path_or_stream, "wb") if own else path_or_stream
    try:
        for c in contigs:
            fh.write(b">" + c.id.encode() + b"\n")
            seq = c.bases.encode()
            for i in range(0, len(seq), width):
                fh.write(seq[i : i + width] + b"\n")
    finally:
        if own:
            fh.close()


def load_labels(stream):
    """Read a tab-separated (isolate_id, phenotype) table into a dict.

    Duplicate rows with identical labels collapse; disagreeing duplicates raise
    ConflictingLabel.
    """
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    labels = {}
    for lineno, raw in enumerate(data.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedLabelTable(f"line {lineno}: expected 2 tab-separated columns, got {len(parts)}")
        isolate_id, token = parts[0].strip(), parts[1]
        if not isolate_id:
            raise MalformedLabelTable(f"line {lineno}: empty isolate id")
        pheno = Phenotype.parse(token)
        if isolate_id in labels and labels[isolate_id] != pheno:
            raise ConflictingLabel(f"isolate {isolate_id!r} labeled both {labels[isolate_id].name} and {pheno.name}")
        labels[isolate_id] = pheno
    return labels


def _load_isolate(path):
    p = Path(path)
    with open(p, "rb") as fh:
        contigs = parse_fasta(fh)
    return Isolate(p.stem, tuple(contigs))


def assemble_dataset(fasta_paths, labels=None, metadata=None, threads=1):
    """Join per-file isolates with the label map into a Dataset.

    Isolate ids default to the file stem. Unlabeled isolates are retained (they
    are skipped later by supervised operations). Class counts land in metadata.
    """
    paths = list(fasta_paths)
    if not paths:
        raise EmptyDataset("no FASTA inputs given")
    isolates = parallel_map(_load_isolate, paths, threads=threads)
    labels = labels or {}
    seen = set()
    joined = []
    for iso in isolates:
        if iso.isolate_id in seen:
            raise DuplicateIsolateId(f"isolate id {iso.isolate_id!r} appears more than once")
        seen.add(iso.isolate_id)
        joined.append(iso.with_label(labels.get(iso.isolate_id)))
    meta = dict(metadata or {})
    ds = Dataset(tuple(joined), meta)
    n_sus, n_res, n_unl = ds.class_counts()
    meta.update(
        n_isolates=str(len(ds)),
        n_labeled=str(n_sus + n_res),
        n_unlabeled=str(n_unl),
        n_sus=str(n_sus),
        n_res=str(n_res),
    )
    return ds
