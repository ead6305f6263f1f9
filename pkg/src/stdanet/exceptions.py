class StdaError(Exception):
    """Base class for every error raised by stdanet."""

    pass


class ShapeMismatchError(StdaError):
    """Raised when operand shapes are inconsistent with an operation's contract."""

    pass


class NonFiniteError(StdaError):
    """Raised when a primitive produces NaN or Inf values."""

    pass


class NormalizationError(StdaError):
    """Raised when attention weights do not sum to one over frames and sampling points."""

    pass


class FlowSetError(StdaError):
    """Raised when a required flow field is missing from a flow set or base-offset map."""

    pass


class GradTapeError(StdaError):
    """Raised when backward is called on something that is not a scalar loss."""

    pass


class ConfigError(StdaError):
    """Raised for unknown keys, malformed values or invalid combinations in a run config."""

    pass


class DatasetError(StdaError):
    """Raised when a dataset root, manifest or sequence is missing or inconsistent."""

    pass


class ImageFormatError(StdaError):
    """Raised when an image file is missing or cannot be decoded."""

    pass


class BlurWindowError(StdaError):
    """Raised when the blur window is even or exceeds the virtual subframe count."""

    pass


class CropError(StdaError):
    """Raised when a crop is larger than the frames or not divisible by four."""

    pass


class CheckpointError(StdaError):
    """Raised when a checkpoint cannot be read or does not match the model configuration."""

    pass


class TrainingDivergedError(StdaError):
    """Raised when a training step produces a non-finite loss."""

    pass
