"""Colorizer backends: text-guided candidate generation and exemplar-guided
temporal propagation.

Both roles ship as built-in classical implementations occupying the same
pipeline slots a neural model would, plus a file protocol for plugging in
external backends:

- the engine writes ``job.json`` and ``input/frame_%06d.png`` (plus
  ``exemplar.png`` for propagator jobs) into a work directory,
- invokes ``<backend-cmd> job.json``,
- the backend writes ``output/candidate_%02d.png`` (generator role) or
  ``output/frame_%06d.png`` (propagator role) and exits 0.

All images are 8-bit RGB PNG.

The built-in backends guarantee exact luminance preservation: the gray
level of every output pixel (Rec.601, integer round-half-up) equals its
input gray level bit-for-bit. Chroma is applied in Lab, projected back
onto the input luma by a constant per-pixel RGB shift, and quantized
with an integer luma correction. Pixels whose luma leaves no chroma
headroom (gray levels 0-1 and 254-255) fall back to pure gray.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ccol.color import is_grayscale, lab_to_rgb_float, luma601, rgb_to_lab, round_half_up
from ccol.errors import BackendError, DimensionMismatchError
from ccol.frameio import Clip, clip_from_frames, load_frame, save_frame
from ccol.selection import CandidateSet

ROLE_GENERATOR = "candidate_generator"
ROLE_PROPAGATOR = "propagator"

DEFAULT_ALPHA = 0.5
DEFAULT_TIMEOUT = 600.0

# Channel headroom (on the float [0,255] scale) reserved so that
# quantization plus the +-1 integer luma correction cannot leave [0,255].
_GAMUT_MARGIN = 1.5
_ZERO_CHROMA = 1e-9

# Base chroma magnitude (Lab units) for caption-driven tinting.
_BASE_CHROMA = 30.0
_SEPIA_HUE = 30.0
_SEPIA_SAT = 0.35

# Token -> hue (degrees) in Lab a/b space.
_COLOR_HUES = {
    "red": 0.0,
    "orange": 30.0,
    "brown": 45.0,
    "yellow": 90.0,
    "green": 135.0,
    "teal": 180.0,
    "cyan": 200.0,
    "blue": 250.0,
    "navy": 260.0,
    "purple": 300.0,
    "violet": 300.0,
    "magenta": 330.0,
    "pink": 350.0,
}
_ACHROMATIC = {"white", "black", "gray", "grey"}

# Region tokens -> the luminance bands they occupy. "background" maps to
# the extreme bands, clothing words to the mid band, per the built-in
# speaker-framing rule table.
_REGION_BANDS = {
    "background": ("low", "high"),
    "backdrop": ("low", "high"),
    "wall": ("low", "high"),
    "top": ("mid",),
    "shirt": ("mid",),
    "sweater": ("mid",),
    "jacket": ("mid",),
    "dress": ("mid",),
    "clothes": ("mid",),
    "clothing": ("mid",),
    "hair": ("low",),
    "face": ("high",),
    "skin": ("high",),
}
_BANDS = {"low": (0, 85), "mid": (86, 170), "high": (171, 255)}


def luma_band_masks(gray_plane: np.ndarray) -> dict[str, np.ndarray]:
    """Boolean masks for the low/mid/high luminance bands."""
    return {
        name: (gray_plane >= lo) & (gray_plane <= hi)
        for name, (lo, hi) in _BANDS.items()
    }


def parse_caption(caption: Optional[str]) -> dict[str, Optional[tuple[float, float]]]:
    """Map caption text to per-band (hue_degrees, saturation) targets.

    A color word binds to the nearest region word within the next three
    tokens; an unbound color word applies to every band not already
    claimed. Achromatic color words clear a band's chroma. A nonempty
    caption with no recognized color words yields a neutral sepia tint;
    an empty caption yields no chroma at all.
    """
    assignments: dict[str, Optional[tuple[float, float]]] = {
        "low": None, "mid": None, "high": None,
    }
    if not caption or not caption.strip():
        return assignments
    tokens = [t for t in "".join(c if c.isalnum() else " " for c in caption.lower()).split()]
    bound_any = False
    unbound: list[tuple[float, float]] = []
    for i, tok in enumerate(tokens):
        if tok in _COLOR_HUES or tok in _ACHROMATIC:
            spec = (0.0, 0.0) if tok in _ACHROMATIC else (_COLOR_HUES[tok], 1.0)
            region = None
            for j in range(i + 1, min(i + 4, len(tokens))):
                if tokens[j] in _REGION_BANDS:
                    region = tokens[j]
                    break
            if region is not None:
                for band in _REGION_BANDS[region]:
                    if assignments[band] is None:
                        assignments[band] = spec
                bound_any = True
            else:
                unbound.append(spec)
    if unbound:
        for band in assignments:
            if assignments[band] is None:
                assignments[band] = unbound[0]
        bound_any = True
    if not bound_any:
        return {band: (_SEPIA_HUE, _SEPIA_SAT) for band in assignments}
    return assignments


_GRAY_LAB_L = rgb_to_lab(np.stack([np.arange(256)] * 3, axis=-1))[:, 0]


def apply_chroma_to_gray(
    gray_plane: np.ndarray, a_plane: np.ndarray, b_plane: np.ndarray
) -> np.ndarray:
    """Synthesize an RGB frame with the given Lab chroma and exact luma.

    The returned frame satisfies luma601(out) == gray_plane bit-for-bit.
    Chroma is geometrically backed off toward zero where the requested
    (a, b) would leave the sRGB gamut at that luma.
    """
    y = np.asarray(gray_plane, dtype=np.int64)
    a = np.asarray(a_plane, dtype=np.float64)
    b = np.asarray(b_plane, dtype=np.float64)
    h, w = y.shape
    light = _GRAY_LAB_L[y]

    def corrected(aa, bb, ll, yy):
        rgb = lab_to_rgb_float(np.stack([ll, aa, bb], axis=-1))
        yf = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        return rgb + (yy - yf)[..., None]

    rgb_f = corrected(a, b, light, y)
    scale = np.ones((h, w))
    for _ in range(60):
        bad = ((rgb_f < _GAMUT_MARGIN) | (rgb_f > 255.0 - _GAMUT_MARGIN)).any(axis=-1)
        bad &= scale > 1e-6
        if not bad.any():
            break
        scale[bad] *= 0.7
        rgb_f[bad] = corrected(
            a[bad] * scale[bad], b[bad] * scale[bad], light[bad], y[bad]
        )
    gray_only = ((rgb_f < _GAMUT_MARGIN) | (rgb_f > 255.0 - _GAMUT_MARGIN)).any(axis=-1)
    gray_only |= (np.abs(a) < _ZERO_CHROMA) & (np.abs(b) < _ZERO_CHROMA)

    out = round_half_up(rgb_f).astype(np.int64)
    for _ in range(4):
        delta = y - ((299 * out[..., 0] + 587 * out[..., 1] + 114 * out[..., 2] + 500) // 1000)
        if not delta.any():
            break
        out += delta[..., None]
    out[gray_only] = y[gray_only, None]
    return np.clip(out, 0, 255).astype(np.uint8)


def palette_colorize(
    gray: np.ndarray, caption: Optional[str], n: int, seed: int
) -> CandidateSet:
    """Generate n caption-tinted candidate colorizations of a gray frame.

    Hue and saturation are jittered per candidate from a seeded RNG so
    candidates differ (zero-chroma captions excepted); output is
    deterministic given (caption, n, seed).
    """
    if n < 1:
        raise ValueError(f"candidate count must be >= 1, got {n}")
    if not is_grayscale(gray):
        raise ValueError("palette_colorize expects a grayscale frame")
    y = luma601(gray)
    bands = luma_band_masks(y)
    targets = parse_caption(caption)
    rng = np.random.default_rng(seed)
    frames = []
    seeds = []
    for i in range(n):
        hue_jitter = float(rng.uniform(-20.0, 20.0))
        sat_jitter = float(rng.uniform(0.7, 1.3))
        a_plane = np.zeros(y.shape, dtype=np.float64)
        b_plane = np.zeros(y.shape, dtype=np.float64)
        for band, spec in targets.items():
            if spec is None:
                continue
            hue_deg, sat = spec
            if sat == 0.0:
                continue
            theta = math.radians(hue_deg + hue_jitter)
            c = _BASE_CHROMA * sat * sat_jitter
            mask = bands[band]
            a_plane[mask] = c * math.cos(theta)
            b_plane[mask] = c * math.sin(theta)
        frames.append(apply_chroma_to_gray(y, a_plane, b_plane))
        seeds.append(seed + i)
    return CandidateSet(frames=np.stack(frames), source="palette", seed_info=seeds)


@dataclass
class ChromaLUT:
    """Luminance-indexed (a, b) chroma table extracted from an exemplar."""

    a: np.ndarray  # (256,)
    b: np.ndarray  # (256,)
    counts: np.ndarray  # (256,) samples per bucket before fill

    def spread(self) -> float:
        """Max per-component spread across buckets (temporal-bound input)."""
        return float(max(np.ptp(self.a), np.ptp(self.b)))


def build_chroma_lut(exemplar: np.ndarray) -> ChromaLUT:
    """Average exemplar Lab chroma into 256 luma buckets.

    Empty buckets are filled from the nearest populated bucket (lower
    index wins ties). Chroma below 1e-9 in magnitude is snapped to zero
    so grayscale exemplars yield an exactly neutral table.
    """
    y = luma601(exemplar).ravel()
    lab = rgb_to_lab(exemplar).reshape(-1, 3)
    counts = np.bincount(y, minlength=256).astype(np.int64)
    a_sum = np.bincount(y, weights=lab[:, 1], minlength=256)
    b_sum = np.bincount(y, weights=lab[:, 2], minlength=256)
    a = np.zeros(256)
    b = np.zeros(256)
    filled = counts > 0
    a[filled] = a_sum[filled] / counts[filled]
    b[filled] = b_sum[filled] / counts[filled]
    populated = np.flatnonzero(filled)
    if populated.size == 0:
        raise ValueError("exemplar produced no luma buckets")
    empty = np.flatnonzero(~filled)
    if empty.size:
        dist = np.abs(empty[:, None] - populated[None, :])
        nearest = populated[np.argmin(dist, axis=1)]
        a[empty] = a[nearest]
        b[empty] = b[nearest]
    a[np.abs(a) < _ZERO_CHROMA] = 0.0
    b[np.abs(b) < _ZERO_CHROMA] = 0.0
    return ChromaLUT(a=a, b=b, counts=counts)


def propagate_chroma(
    gray_planes: np.ndarray, lut: ChromaLUT, alpha: float
) -> np.ndarray:
    """Per-frame LUT chroma with exponential temporal blending.

    Returns a (T, H, W, 2) float array of blended (a, b) chroma:
    chroma_t = alpha * chroma_{t-1} + (1 - alpha) * lut_chroma_t, with
    chroma_0 = lut_chroma_0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    t = gray_planes.shape[0]
    out = np.empty(gray_planes.shape + (2,), dtype=np.float64)
    prev = None
    for i in range(t):
        lut_ab = np.stack([lut.a[gray_planes[i]], lut.b[gray_planes[i]]], axis=-1)
        if prev is None:
            out[i] = lut_ab
        else:
            out[i] = alpha * prev + (1.0 - alpha) * lut_ab
        prev = out[i]
    return out


def exemplar_propagate(gray_clip: Clip, exemplar: np.ndarray, alpha: float = DEFAULT_ALPHA) -> Clip:
    """Colorize a grayscale clip by exemplar chroma transfer over time.

    The luminance plane is preserved exactly:
    desaturate(output_t) == input_t for every frame.
    """
    if exemplar.shape[:2] != (gray_clip.height, gray_clip.width):
        raise DimensionMismatchError(
            f"exemplar is {exemplar.shape[1]}x{exemplar.shape[0]}, "
            f"clip is {gray_clip.width}x{gray_clip.height}"
        )
    for i in range(gray_clip.frame_count):
        if not is_grayscale(gray_clip.frames[i]):
            raise ValueError(f"input frame {i} is not grayscale")
    lut = build_chroma_lut(exemplar)
    planes = np.stack([luma601(gray_clip.frames[i]) for i in range(gray_clip.frame_count)])
    chroma = propagate_chroma(planes, lut, alpha)
    frames = [
        apply_chroma_to_gray(planes[i], chroma[i, ..., 0], chroma[i, ..., 1])
        for i in range(gray_clip.frame_count)
    ]
    return clip_from_frames(frames, gray_clip.fps, gray_clip.caption, gray_clip.name)


@dataclass
class BackendJob:
    """One unit of work for a colorizer backend, as laid out on disk."""

    role: str
    work_dir: Path
    input_frames: list[str]
    caption: Optional[str] = None
    exemplar_path: Optional[str] = None
    candidate_count: int = 1
    seed: int = 0
    fps: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self) -> None:
        self.work_dir = Path(self.work_dir)
        if self.role not in (ROLE_GENERATOR, ROLE_PROPAGATOR):
            raise ValueError(f"unknown backend role {self.role!r}")
        if self.role == ROLE_GENERATOR and self.caption is None:
            raise ValueError("candidate_generator jobs require a caption")
        if self.role == ROLE_PROPAGATOR and not self.exemplar_path:
            raise ValueError("propagator jobs require an exemplar_path")
        if not 1 <= self.candidate_count <= 99:
            raise ValueError(f"candidate_count must be in [1, 99], got {self.candidate_count}")

    def to_json_dict(self) -> dict:
        return {
            "role": self.role,
            "work_dir": str(self.work_dir),
            "input_frames": self.input_frames,
            "caption": self.caption,
            "exemplar_path": self.exemplar_path,
            "candidate_count": self.candidate_count,
            "seed": self.seed,
            "fps": self.fps,
            "alpha": self.alpha,
        }


def write_generator_job(
    work_dir: str | Path, gray: np.ndarray, caption: str, n: int, seed: int
) -> BackendJob:
    """Lay out a candidate-generation job directory and its job.json."""
    work_dir = Path(work_dir)
    (work_dir / "input").mkdir(parents=True, exist_ok=True)
    rel = "input/frame_000000.png"
    save_frame(gray, work_dir / rel)
    job = BackendJob(
        role=ROLE_GENERATOR,
        work_dir=work_dir,
        input_frames=[rel],
        caption=caption,
        candidate_count=n,
        seed=seed,
    )
    (work_dir / "job.json").write_text(json.dumps(job.to_json_dict(), indent=2))
    return job


def write_propagator_job(
    work_dir: str | Path, gray_clip: Clip, exemplar: np.ndarray, alpha: float = DEFAULT_ALPHA
) -> BackendJob:
    """Lay out a propagation job directory and its job.json."""
    work_dir = Path(work_dir)
    (work_dir / "input").mkdir(parents=True, exist_ok=True)
    rels = []
    for i in range(gray_clip.frame_count):
        rel = f"input/frame_{i:06d}.png"
        save_frame(gray_clip.frames[i], work_dir / rel)
        rels.append(rel)
    save_frame(exemplar, work_dir / "exemplar.png")
    job = BackendJob(
        role=ROLE_PROPAGATOR,
        work_dir=work_dir,
        input_frames=rels,
        exemplar_path="exemplar.png",
        fps=gray_clip.fps,
        alpha=alpha,
    )
    (work_dir / "job.json").write_text(json.dumps(job.to_json_dict(), indent=2))
    return job


def _read_output_frames(
    work_dir: Path, pattern: str, count: int, expect_hw: tuple[int, int]
) -> list[np.ndarray]:
    frames = []
    for i in range(count):
        p = work_dir / "output" / (pattern % i)
        if not p.is_file():
            raise BackendError(f"backend wrote no output for index {i}: missing {p}")
        f = load_frame(p)
        if f.shape[:2] != expect_hw:
            raise BackendError(
                f"backend output {p} is {f.shape[1]}x{f.shape[0]}, "
                f"expected {expect_hw[1]}x{expect_hw[0]}"
            )
        frames.append(f)
    return frames


def run_external_backend(
    job: BackendJob, command: list[str] | str, timeout: float = DEFAULT_TIMEOUT
):
    """Invoke an external backend on a prepared job and collect its output.

    Returns a CandidateSet for generator jobs or a Clip for propagator
    jobs. Raises BackendError on nonzero exit, timeout, or missing or
    mis-sized output frames.
    """
    if isinstance(command, str):
        command = shlex.split(command)
    job_path = job.work_dir / "job.json"
    if not job_path.is_file():
        raise BackendError(f"job.json not found in {job.work_dir}")
    try:
        proc = subprocess.run(
            [*command, str(job_path)],
            capture_output=True,
            text=True,
            timeout=timeout,
            cwd=job.work_dir,
        )
    except subprocess.TimeoutExpired as e:
        raise BackendError(f"backend timed out after {timeout}s: {command}") from e
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-5:]
        raise BackendError(
            f"backend exited {proc.returncode}: {command}\n" + "\n".join(tail)
        )
    first_input = load_frame(job.work_dir / job.input_frames[0])
    expect_hw = first_input.shape[:2]
    if job.role == ROLE_GENERATOR:
        frames = _read_output_frames(
            job.work_dir, "candidate_%02d.png", job.candidate_count, expect_hw
        )
        return CandidateSet(
            frames=np.stack(frames),
            source=" ".join(command),
            seed_info=[job.seed + i for i in range(job.candidate_count)],
        )
    frames = _read_output_frames(
        job.work_dir, "frame_%06d.png", len(job.input_frames), expect_hw
    )
    return clip_from_frames(frames, job.fps or 25.0, job.caption)
