"""Domain error hierarchy.

Every error carries a stable machine-readable code (the class name) that the
CLI prints on exit status 1. Codes are part of the tool's contract and must
not be renamed.
"""


class PipelineError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def code(self):
        return type(self).__name__


# sequence ingestion
class MalformedFasta(PipelineError):
    pass


class ConflictingLabel(PipelineError):
    pass


class UnknownPhenotype(PipelineError):
    pass


class MalformedLabelTable(PipelineError):
    pass


class EmptyDataset(PipelineError):
    pass


class DuplicateIsolateId(PipelineError):
    pass


# k-mer engine
class AmbiguousBase(PipelineError):
    pass


class KTooLarge(PipelineError):
    pass


class MixedSpecs(PipelineError):
    pass


class NoValidBases(PipelineError):
    pass


# feature matrix / serialization
class CorruptMatrixFile(PipelineError):
    pass


class CorruptVocabularyFile(PipelineError):
    pass


class CorruptModelFile(PipelineError):
    pass


class CountOverflow(PipelineError):
    pass


# learners
class EmptyNode(PipelineError):
    pass


class NoLabeledSamples(PipelineError):
    pass


class SingleClassTraining(PipelineError):
    pass


class IndexOutOfRange(PipelineError):
    pass


class DegenerateWeakLearner(PipelineError):
    pass


# evaluation
class TooFewSamples(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


class SingleClassEval(PipelineError):
    pass


class SizeExceedsDataset(PipelineError):
    pass


class InconsistentK(PipelineError):
    pass


class FeatureCountMismatch(PipelineError):
    pass


class VocabularyMismatch(PipelineError):
    pass


# synthetic corpus generation
class MarkerLongerThanContig(PipelineError):
    pass
