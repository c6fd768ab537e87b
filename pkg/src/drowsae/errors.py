"""Exception types shared across the package."""


class DrowsaeError(Exception):
    """Base class for all package-specific errors."""


class ZeroVectorError(DrowsaeError):
    """A vector with (near-)zero Euclidean norm cannot be normalized."""


class DimensionMismatchError(DrowsaeError):
    """Frames or sequences disagree on their expected dimensions."""


class ShapeMismatchError(DrowsaeError):
    """Model parameter or activation shapes are inconsistent."""


class ParseError(DrowsaeError):
    """A data file does not follow its documented format."""


class LabelLengthMismatchError(ParseError):
    """Per-frame label string length differs from the number of frames."""


class GridTooFineError(DrowsaeError):
    """A tile grid would produce empty tiles for the given image."""


class InsufficientSubjectsError(DrowsaeError):
    """Not enough subjects to fill every requested split."""


class NoNormalClipsError(DrowsaeError):
    """Filtering by the training rates left no normal clips."""


class DivergenceError(DrowsaeError):
    """Training loss became non-finite."""


class SingleClassError(DrowsaeError):
    """An evaluation set contains only one class."""


class ConfigError(DrowsaeError):
    """An experiment configuration is missing or invalid."""


class StageError(DrowsaeError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
