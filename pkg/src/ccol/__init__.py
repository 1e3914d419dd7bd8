"""Controllable speaker-video colorization pipeline and evaluation workbench.

A frame is an (H, W, 3) uint8 numpy array in sRGB. A clip is an ordered
stack of frames with fps metadata. Everything downstream (quality scoring,
exemplar selection, colorization backends, metrics, the HTTP control plane)
is built on those two carriers.
"""

__version__ = "0.1.0"

from ccol.errors import (
    BackendError,
    CcolError,
    DegenerateCorpusError,
    DimensionMismatchError,
    FrameTooSmallError,
    ManifestError,
    ScorerError,
)

__all__ = [
    "__version__",
    "CcolError",
    "BackendError",
    "DegenerateCorpusError",
    "DimensionMismatchError",
    "FrameTooSmallError",
    "ManifestError",
    "ScorerError",
]
