"""Clip manifests, frame-sequence loading/saving, and resizing.

A clip lives on disk as a directory of 8-bit RGB PNG frames named
``frame_000000.png`` upward plus a ``clip.json`` manifest. Manifest frame
paths are stored relative to the manifest's directory and resolved to
absolute paths on load.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ccol.color import round_half_up, validate_frame
from ccol.errors import DimensionMismatchError, ManifestError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "clip.json"
FRAME_PATTERN = "frame_%06d.png"

_MANIFEST_KEYS = {
    "name",
    "fps",
    "width",
    "height",
    "frame_paths",
    "caption",
    "caption_source",
    "ground_truth_paths",
}


@dataclass
class ClipManifest:
    """Dataset-facing description of one clip.

    ``caption`` is an opaque string; ``caption_source`` records where it
    came from (e.g. the name of an external captioner) and is never used
    to regenerate anything.
    """

    name: str
    fps: float
    width: int
    height: int
    frame_paths: list[str]
    caption: Optional[str] = None
    caption_source: Optional[str] = None
    ground_truth_paths: Optional[list[str]] = None

    def __post_init__(self) -> None:
        if not self.frame_paths:
            raise ManifestError(f"manifest {self.name!r}: frame_paths is empty")
        if self.fps <= 0:
            raise ManifestError(f"manifest {self.name!r}: fps must be > 0, got {self.fps}")
        if self.ground_truth_paths is not None and len(self.ground_truth_paths) != len(
            self.frame_paths
        ):
            raise ManifestError(
                f"manifest {self.name!r}: ground_truth_paths length "
                f"{len(self.ground_truth_paths)} != frame_paths length {len(self.frame_paths)}"
            )

    def to_json_dict(self, base_dir: Optional[Path] = None) -> dict:
        """Serializable dict; paths made relative to base_dir when given."""

        def rel(p: str) -> str:
            if base_dir is None:
                return p
            try:
                return str(Path(p).relative_to(base_dir))
            except ValueError:
                return p

        d = {
            "name": self.name,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "frame_paths": [rel(p) for p in self.frame_paths],
            "caption": self.caption,
        }
        if self.caption_source is not None:
            d["caption_source"] = self.caption_source
        if self.ground_truth_paths is not None:
            d["ground_truth_paths"] = [rel(p) for p in self.ground_truth_paths]
        return d


@dataclass
class Clip:
    """An in-memory frame sequence: (T, H, W, 3) uint8 plus fps metadata."""

    frames: np.ndarray
    fps: float
    caption: Optional[str] = None
    name: str = "clip"

    def __post_init__(self) -> None:
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[3] != 3 or f.shape[0] == 0:
            raise ValueError(f"clip frames must have shape (T, H, W, 3), got {f.shape}")
        if f.dtype != np.uint8:
            raise ValueError(f"clip frames must be uint8, got {f.dtype}")
        self.frames = f

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def clip_from_frames(
    frames: list[np.ndarray], fps: float, caption: Optional[str] = None, name: str = "clip"
) -> Clip:
    """Stack a list of equally sized frames into a Clip."""
    if not frames:
        raise ValueError("cannot build a clip from zero frames")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"frames have mixed shapes: {sorted(shapes)}")
    return Clip(frames=np.stack(frames), fps=fps, caption=caption, name=name)


def load_manifest(path: str | Path) -> ClipManifest:
    """Read a clip.json manifest; unknown keys are ignored with a warning."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from e
    unknown = set(raw) - _MANIFEST_KEYS
    if unknown:
        logger.warning("manifest %s: ignoring unknown keys %s", path, sorted(unknown))
    base = path.parent

    def absolute(paths: Optional[list[str]]) -> Optional[list[str]]:
        if paths is None:
            return None
        return [str((base / p).resolve()) if not Path(p).is_absolute() else p for p in paths]

    try:
        return ClipManifest(
            name=raw["name"],
            fps=raw["fps"],
            width=raw["width"],
            height=raw["height"],
            frame_paths=absolute(raw["frame_paths"]),
            caption=raw.get("caption"),
            caption_source=raw.get("caption_source"),
            ground_truth_paths=absolute(raw.get("ground_truth_paths")),
        )
    except KeyError as e:
        raise ManifestError(f"manifest {path} is missing required key {e}") from e


def _load_frame_file(path: str, width: int, height: int) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"frame file missing: {path}")
    try:
        img = Image.open(p)
        img.load()
    except Exception as e:
        raise ManifestError(f"frame file failed to decode: {path} ({e})") from e
    if img.mode == "L":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise ManifestError(f"frame file is not 8-bit RGB ({img.mode}): {path}")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape[0] != height or arr.shape[1] != width:
        raise DimensionMismatchError(
            f"frame {path} is {arr.shape[1]}x{arr.shape[0]}, manifest says {width}x{height}"
        )
    return arr


def load_clip(manifest: ClipManifest) -> Clip:
    """Load all frames referenced by a manifest, in manifest order."""
    frames = [
        _load_frame_file(p, manifest.width, manifest.height) for p in manifest.frame_paths
    ]
    return clip_from_frames(frames, manifest.fps, manifest.caption, manifest.name)


def load_ground_truth(manifest: ClipManifest) -> Optional[Clip]:
    """Load the ground-truth companion clip when the manifest declares one."""
    if manifest.ground_truth_paths is None:
        return None
    frames = [
        _load_frame_file(p, manifest.width, manifest.height)
        for p in manifest.ground_truth_paths
    ]
    return clip_from_frames(frames, manifest.fps, manifest.caption, manifest.name + "-truth")


def save_clip(
    clip: Clip,
    directory: str | Path,
    *,
    name: Optional[str] = None,
    ground_truth_paths: Optional[list[str]] = None,
    caption_source: Optional[str] = None,
) -> ClipManifest:
    """Write frames as PNGs plus a clip.json manifest into directory.

    Existing frame files are overwritten deterministically. Returns the
    manifest with absolute frame paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(clip.frame_count):
        p = directory / (FRAME_PATTERN % i)
        Image.fromarray(clip.frames[i], mode="RGB").save(p, format="PNG")
        paths.append(str(p.resolve()))
    manifest = ClipManifest(
        name=name or clip.name,
        fps=clip.fps,
        width=clip.width,
        height=clip.height,
        frame_paths=paths,
        caption=clip.caption,
        caption_source=caption_source,
        ground_truth_paths=ground_truth_paths,
    )
    out = directory / MANIFEST_NAME
    out.write_text(json.dumps(manifest.to_json_dict(base_dir=directory.resolve()), indent=2))
    return manifest


def save_frame(frame: np.ndarray, path: str | Path) -> None:
    """Write a single frame as an 8-bit RGB PNG."""
    frame = validate_frame(frame)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame, mode="RGB").save(path, format="PNG")


def load_frame(path: str | Path) -> np.ndarray:
    """Read a single 8-bit RGB PNG (grayscale PNGs are promoted to RGB)."""
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"frame file missing: {path}")
    img = Image.open(p)
    img.load()
    if img.mode == "L":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise ManifestError(f"frame file is not 8-bit RGB ({img.mode}): {path}")
    return np.asarray(img, dtype=np.uint8)


def _axis_weights(n_in: int, n_out: int) -> Optional[np.ndarray]:
    """Resampling weight matrix for one axis, or None for identity.

    Downscale uses area averaging (box overlap), upscale uses bilinear
    interpolation at pixel centers. Every row sums to 1, so constant
    inputs stay constant.
    """
    if n_out == n_in:
        return None
    w = np.zeros((n_out, n_in), dtype=np.float64)
    if n_out < n_in:
        scale = n_in / n_out
        for i in range(n_out):
            left = i * scale
            right = (i + 1) * scale
            j0 = int(np.floor(left))
            j1 = min(int(np.ceil(right)), n_in)
            for j in range(j0, j1):
                overlap = min(right, j + 1) - max(left, j)
                if overlap > 0:
                    w[i, j] = overlap
            w[i] /= w[i].sum()
    else:
        scale = n_in / n_out
        for i in range(n_out):
            center = (i + 0.5) * scale - 0.5
            center = min(max(center, 0.0), n_in - 1.0)
            j0 = int(np.floor(center))
            t = center - j0
            w[i, j0] += 1.0 - t
            if j0 + 1 < n_in:
                w[i, j0 + 1] += t
            else:
                w[i, j0] += t
    return w


def resize(frame: np.ndarray, width: int, height: int) -> np.ndarray:
    """Resample a frame: area averaging down, bilinear up, per axis."""
    frame = validate_frame(frame)
    if width < 1 or height < 1:
        raise ValueError(f"target size must be >= 1, got {width}x{height}")
    h_in, w_in = frame.shape[:2]
    wh = _axis_weights(h_in, height)
    ww = _axis_weights(w_in, width)
    if wh is None and ww is None:
        return frame.copy()
    out = frame.astype(np.float64)
    if wh is not None:
        out = np.tensordot(wh, out, axes=(1, 0))
    if ww is not None:
        out = np.tensordot(ww, out, axes=(1, 1)).transpose(1, 0, 2)
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def resize_clip(clip: Clip, width: int, height: int) -> Clip:
    """Resize every frame of a clip."""
    frames = [resize(clip.frames[i], width, height) for i in range(clip.frame_count)]
    return clip_from_frames(frames, clip.fps, clip.caption, clip.name)
