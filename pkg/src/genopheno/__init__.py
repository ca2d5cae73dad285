"""K-mer based genotype-to-phenotype classification of antimicrobial resistance."""

__version__ = "0.1.0"

from .errors import PipelineError
from .kmers import KmerSpec, build_vocabulary, canonical, count_kmers, encode_kmer, gc_content
from .matrix import FeatureMatrix, binarize, build_matrix, load_matrix, save_matrix
from .sequences import Dataset, Isolate, Phenotype, assemble_dataset, load_labels, parse_fasta

__all__ = [
    "PipelineError",
    "KmerSpec",
    "build_vocabulary",
    "canonical",
    "count_kmers",
    "encode_kmer",
    "gc_content",
    "FeatureMatrix",
    "binarize",
    "build_matrix",
    "load_matrix",
    "save_matrix",
    "Dataset",
    "Isolate",
    "Phenotype",
    "assemble_dataset",
    "load_labels",
    "parse_fasta",
    "__version__",
]
