"""Exception hierarchy shared across the package.

Every error raised on a contract violation has its own class so callers
(and the CLI exit-code mapping) can dispatch on type rather than message.
"""


class MixgopError(Exception):
    """Base class for all package-specific errors."""


class DataError(MixgopError):
    """A dataset, manifest, or model artifact violates its contract."""


class ManifestParseError(DataError):
    """Manifest is malformed or inconsistent with its blob."""


class ShapeMismatch(DataError):
    """Binary blob size disagrees with the declared record/feature counts."""


class UnknownPhoneme(DataError):
    """A record references a phoneme outside the inventory."""


class UnknownSymbol(DataError):
    """A symbol has no natural-class entry and is not the boundary marker."""


class NonFiniteValue(DataError):
    """A feature matrix contains NaN or Inf."""


class MissingModel(DataError):
    """A phoneme present in the scored split has no trained model."""


class MissingGroundTruth(DataError):
    """Requested evaluation level has no ground-truth annotations."""


class EmptyTrainSplit(DataError):
    """Training was requested on a feature set with no train rows."""


class EmptyUtterance(DataError):
    """An utterance has no segments to pool."""


class UnmatchedKey(DataError):
    """A score-file key matches no speaker/utterance in the manifest."""


class DimensionMismatch(MixgopError, ValueError):
    """Vector or matrix dimensions disagree with the fitted model."""


class TooFewSamples(MixgopError, ValueError):
    """Fewer samples than the algorithm's minimum."""


class TooFewUtterances(MixgopError, ValueError):
    """Fewer utterances than cross-validation folds."""


class ZeroPrior(MixgopError, ValueError):
    """Prior-normalized score requested for a phoneme with zero prior."""


class DegenerateData(MixgopError, ValueError):
    """Input data admits no meaningful solution (e.g. all rows identical)."""


class DegenerateInput(MixgopError, ValueError):
    """Rank correlation is undefined because an input list is constant."""


class DegenerateEnvironments(MixgopError, ValueError):
    """Environment entropy is zero, so normalized MI is undefined."""


class NumericalFailure(MixgopError):
    """Numerical routine failed after all regularization retries."""
