"""Synthetic labeled corpora with one planted resistance-marker k-mer.

Backgrounds are i.i.d. bases with a configurable GC fraction; each isolate is
labeled RES with the given probability and receives the marker (overwriting
bases at a uniform position in one contig) with a class-conditional presence
probability. The truth record lists every insertion exactly, so a sequence
scan can verify the generator and the whole pipeline can be checked end to
end against the PLANTED region.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import MarkerLongerThanContig
from .evaluation import RegionAnnotation
from .kmers import KmerSpec, canonical, encode_kmer
from .sequences import Contig, Dataset, Isolate, Phenotype, write_fasta
from .util import derived_rng

_BASE_BYTES = np.frombuffer(b"ACGT", dtype=np.uint8)

PLANTED_REGION = "PLANTED"


@dataclass(frozen=True)
class SynthSpec:
    n_isolates: int
    contig_length: int
    marker: str
    n_contigs_per_isolate: int = 1
    resistant_fraction: float = 0.5
    marker_presence_in_res: float = 0.95
    marker_presence_in_sus: float = 0.05
    background_gc: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not set(self.marker) <= set("ACGT") or not self.marker:
            raise ValueError("marker must be a non-empty ACGT string")
        if self.contig_length < len(self.marker):
            raise MarkerLongerThanContig(
                f"marker length {len(self.marker)} exceeds contig length {self.contig_length}"
            )
        if not 0.0 < self.resistant_fraction < 1.0:
            raise ValueError("resistant_fraction must lie strictly between 0 and 1")
        if not 0.0 < self.background_gc < 1.0:
            raise ValueError("background_gc must lie strictly between 0 and 1")
        if self.n_isolates < 1 or self.n_contigs_per_isolate < 1:
            raise ValueError("isolate and contig counts must be >= 1")


def generate(spec):
    """(Dataset, RegionAnnotation, truth record), fully determined by the seed.

    Per isolate the rng is consumed in a fixed order: label, contig bases,
    marker presence, then (when inserted) contig slot and position.
    """
    rng = derived_rng(spec.seed)
    gc = spec.background_gc
    base_p = np.array([0.5 - gc / 2, gc / 2, gc / 2, 0.5 - gc / 2])
    mlen = len(spec.marker)

    isolates = []
    truth_rows = []
    for i in range(spec.n_isolates):
        isolate_id = f"iso{i:05d}"
        is_res = bool(rng.random() < spec.resistant_fraction)
        contigs = []
        for c in range(spec.n_contigs_per_isolate):
            draws = rng.choice(4, size=spec.contig_length, p=base_p)
            contigs.append(_BASE_BYTES[draws].tobytes().decode("ascii"))
        presence = spec.marker_presence_in_res if is_res else spec.marker_presence_in_sus
        inserted = bool(rng.random() < presence)
        slot = pos = None
        if inserted:
            slot = int(rng.integers(0, spec.n_contigs_per_isolate))
            pos = int(rng.integers(0, spec.contig_length - mlen + 1))
            seq = contigs[slot]
            contigs[slot] = seq[:pos] + spec.marker + seq[pos + mlen :]
        label = Phenotype.RES if is_res else Phenotype.SUS
        isolates.append(
            Isolate(
                isolate_id,
                tuple(Contig(f"c{c}", seq) for c, seq in enumerate(contigs)),
                label,
            )
        )
        truth_rows.append(
            {
                "isolate_id": isolate_id,
                "label": label.name,
                "marker_inserted": inserted,
                "contig_id": None if slot is None else f"c{slot}",
                "position": pos,
            }
        )

    kspec = KmerSpec(k=mlen, canonical=True)
    annotation = RegionAnnotation(
        spec=kspec,
        mapping={canonical(encode_kmer(spec.marker), mlen): PLANTED_REGION},
    )
    truth = {
        "marker": spec.marker,
        "region": PLANTED_REGION,
        "seed": spec.seed,
        "isolates": truth_rows,
    }
    dataset = Dataset(
        tuple(isolates),
        metadata={"source": "synthetic", "marker_length": str(mlen)},
    )
    return dataset, annotation, truth


def write_corpus(dataset, marker, truth, out_dir):
    """Emit the corpus as plain pipeline inputs: per-isolate FASTA files under
    isolates/, labels.tsv, annotation.tsv, and truth.json."""
    from pathlib import Path

    out = Path(out_dir)
    iso_dir = out / "isolates"
    iso_dir.mkdir(parents=True, exist_ok=True)
    fasta_paths = []
    for iso in dataset.isolates:
        path = iso_dir / f"{iso.isolate_id}.fa"
        write_fasta(iso.contigs, path)
        fasta_paths.append(path)
    with open(out / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for iso in dataset.isolates:
            if iso.label is not None:
                fh.write(f"{iso.isolate_id}\t{iso.label.name}\n")
    with open(out / "annotation.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{marker}\t{PLANTED_REGION}\n")
    with open(out / "truth.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(truth, sort_keys=True, indent=2) + "\n")
    return fasta_paths
