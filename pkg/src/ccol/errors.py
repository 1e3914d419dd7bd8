"""Exception types shared across the package."""


class CcolError(Exception):
    """Base class for errors raised by this package."""


class ManifestError(CcolError):
    """A clip manifest is missing, malformed, or inconsistent with its frames."""


class DimensionMismatchError(CcolError):
    """Two inputs that must share dimensions do not."""


class FrameTooSmallError(CcolError):
    """A frame is below the minimum size an operation supports."""


class DegenerateCorpusError(CcolError):
    """A model-fitting corpus carries no usable signal (e.g. all-constant frames)."""


class ScorerError(CcolError):
    """A quality scorer failed on a frame."""


class BackendError(CcolError):
    """An external colorizer backend failed, timed out, or wrote invalid output."""


class StageError(CcolError):
    """A pipeline stage failed; carries the stage name for run records."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
