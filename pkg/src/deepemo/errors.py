"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps the three families below onto process exit codes, so new
errors should derive from one of them.
"""


class DeepEmoError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class DataError(DeepEmoError, ValueError):
    """Bad input data: unreadable audio, malformed names, bad files."""

    exit_code = 2


class NumericalError(DeepEmoError, ArithmeticError):
    """Divergence or other numerical abort."""

    exit_code = 3


# audio
class UnsupportedFormat(DataError):
    pass


class TruncatedFile(DataError):
    pass


class MalformedHeader(DataError):
    pass


class EmptyClip(DataError):
    pass


# dsp
class NonPowerOfTwoLength(DataError):
    pass


class SignalShorterThanFrame(DataError):
    pass


class NegativeFrequency(DataError):
    pass


class InvalidBandRange(DataError):
    pass


class InvalidConfig(DataError):
    pass


# dataset
class MalformedFilename(DataError):
    pass


class UnknownEmotionCode(DataError):
    pass


class MissingDirectory(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyInput(DataError):
    pass


# nn
class ShapeMismatch(DataError):
    pass


class TargetOutOfRange(DataError):
    pass


class NoFinalLinear(DataError):
    pass


class BadMagic(DataError):
    pass


class VersionMismatch(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


class MissingParameter(DataError):
    pass


# train-eval
class EmptyTrainSet(DataError):
    pass


class EmptyEvalSet(DataError):
    pass


class NonFiniteLoss(NumericalError):
    pass
