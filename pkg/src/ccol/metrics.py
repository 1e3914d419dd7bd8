"""Evaluation metrics: PSNR, SSIM, Fréchet machinery (FID/FVD) with
pluggable features, and survey tallying.

PSNR of identical frames is reported as float('inf'); JSON serialization
writes the string "inf" and comparisons treat it as greater than any
finite score. SSIM uses the original publication's constants (11x11
Gaussian window sigma=1.5, K1=0.01, K2=0.03, L=255) on Rec.601 luma.

The Fréchet distance between Gaussian summaries is
||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), with the matrix square
root taken by eigendecomposition of the symmetrized product
S1^{1/2} S2 S1^{1/2}. Real Inception/I3D extractors are out of scope:
feature sets come from the built-in toy extractors or from feature
files written by external extractors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ccol.color import luma601_float, rgb_to_lab
from ccol.errors import DimensionMismatchError, FrameTooSmallError
from ccol.frameio import Clip

FID_EPS = 1e-6
FVD_WINDOW = 16

UNIT_FRAME = "frame"
UNIT_CLIP = "clip"


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels; inf when equal."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))


_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_L = 255.0
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5


def _ssim_window() -> np.ndarray:
    x = np.arange(_SSIM_WIN) - (_SSIM_WIN - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * _SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


_SSIM_W = _ssim_window()


def _valid_filter(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2-D valid-mode correlation via stacked shifted views."""
    wh, ww = window.shape
    h, w = plane.shape
    out = np.zeros((h - wh + 1, w - ww + 1), dtype=np.float64)
    for dy in range(wh):
        for dx in range(ww):
            out += window[dy, dx] * plane[dy : dy + h - wh + 1, dx : dx + w - ww + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity on luma, valid-mode windows."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    x = luma601_float(a) if a.ndim == 3 else a.astype(np.float64)
    y = luma601_float(b) if b.ndim == 3 else b.astype(np.float64)
    if min(x.shape) < _SSIM_WIN:
        raise FrameTooSmallError(
            f"ssim needs at least {_SSIM_WIN}x{_SSIM_WIN}, got {x.shape[1]}x{x.shape[0]}"
        )
    c1 = (_SSIM_K1 * _SSIM_L) ** 2
    c2 = (_SSIM_K2 * _SSIM_L) ** 2
    mu_x = _valid_filter(x, _SSIM_W)
    mu_y = _valid_filter(y, _SSIM_W)
    xx = _valid_filter(x * x, _SSIM_W) - mu_x * mu_x
    yy = _valid_filter(y * y, _SSIM_W) - mu_y * mu_y
    xy = _valid_filter(x * y, _SSIM_W) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


@dataclass
class GaussianSummary:
    """Mean vector and covariance matrix of a feature distribution."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise ValueError(
                f"covariance shape {self.covariance.shape} does not match mean dim {d}"
            )
        if d and np.abs(self.covariance - self.covariance.T).max() > 1e-9:
            raise ValueError("covariance is not symmetric within 1e-9")


def _psd_sqrt(sym: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < -1e-6:
        raise ValueError(f"matrix has negative eigenvalue {vals.min():.3g}; not PSD")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """Fréchet distance between two Gaussians.

    Each covariance is square-rooted by eigendecomposition (eigenvalues
    below -1e-6 are an error, small negatives clamp to 0). The trace of
    the product square root is then the nuclear norm of
    S1^{1/2} S2^{1/2}, which has the same spectrum-squared as the
    symmetrized product S1^{1/2} S2 S1^{1/2} but avoids squaring the
    eigenvalue range, keeping identical inputs at distance ~1e-10 even
    for ill-conditioned covariances.
    """
    if g1.mean.shape != g2.mean.shape:
        raise DimensionMismatchError(
            f"gaussian dims differ: {g1.mean.shape[0]} vs {g2.mean.shape[0]}"
        )
    diff = g1.mean - g2.mean
    s1_half = _psd_sqrt((g1.covariance + g1.covariance.T) / 2.0)
    s2_half = _psd_sqrt((g2.covariance + g2.covariance.T) / 2.0)
    trace_sqrt = float(np.linalg.svd(s1_half @ s2_half, compute_uv=False).sum())
    return float(
        diff @ diff
        + np.trace(g1.covariance)
        + np.trace(g2.covariance)
        - 2.0 * trace_sqrt
    )


@dataclass
class FeatureSet:
    """Equal-length feature vectors plus extractor provenance."""

    vectors: np.ndarray  # (N, D)
    extractor_id: str
    unit: str  # frame | clip

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError(f"feature vectors must be a nonempty (N, D) array, got {v.shape}")
        if self.unit not in (UNIT_FRAME, UNIT_CLIP):
            raise ValueError(f"unknown feature unit {self.unit!r}")
        self.vectors = v

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _empirical_summary(vectors: np.ndarray, eps: float) -> GaussianSummary:
    mean = vectors.mean(axis=0)
    d = vectors.shape[1]
    if vectors.shape[0] > 1:
        cov = np.atleast_2d(np.cov(vectors, rowvar=False, ddof=1))
    else:
        cov = np.zeros((d, d))
    return GaussianSummary(mean=mean, covariance=cov + eps * np.eye(d))


def _check_compatible(real: FeatureSet, generated: FeatureSet, unit: str) -> None:
    if real.unit != unit or generated.unit != unit:
        raise ValueError(
            f"expected {unit}-unit feature sets, got {real.unit!r} and {generated.unit!r}"
        )
    if real.extractor_id != generated.extractor_id:
        raise ValueError(
            f"extractor mismatch: {real.extractor_id!r} vs {generated.extractor_id!r}"
        )
    if real.vectors.shape[1] != generated.vectors.shape[1]:
        raise DimensionMismatchError(
            f"feature dims differ: {real.vectors.shape[1]} vs {generated.vectors.shape[1]}"
        )


def fid(real: FeatureSet, generated: FeatureSet) -> float:
    """Fréchet distance between frame-level feature distributions."""
    _check_compatible(real, generated, UNIT_FRAME)
    if len(real) < 2 or len(generated) < 2:
        raise ValueError(
            f"fid needs at least 2 vectors per set, got {len(real)} and {len(generated)}"
        )
    return frechet_distance(
        _empirical_summary(real.vectors, FID_EPS),
        _empirical_summary(generated.vectors, FID_EPS),
    )


def fvd(real_clips: FeatureSet, generated_clips: FeatureSet) -> float:
    """Fréchet distance between clip-level feature distributions.

    Single-clip sets are allowed (short evaluation subsets produce one
    16-frame window); the empirical covariance of one vector is zero.
    """
    _check_compatible(real_clips, generated_clips, UNIT_CLIP)
    return frechet_distance(
        _empirical_summary(real_clips.vectors, FID_EPS),
        _empirical_summary(generated_clips.vectors, FID_EPS),
    )


_GRID = 4


def toy_frame_features(frame: np.ndarray) -> np.ndarray:
    """48-dim stand-in for Inception features: 4x4 grid of Lab cell means."""
    lab = rgb_to_lab(np.asarray(frame))
    h, w = lab.shape[:2]
    feats = []
    for gy in range(_GRID):
        y0, y1 = gy * h // _GRID, (gy + 1) * h // _GRID
        for gx in range(_GRID):
            x0, x1 = gx * w // _GRID, (gx + 1) * w // _GRID
            cell = lab[y0:y1, x0:x1]
            feats.extend(cell.reshape(-1, 3).mean(axis=0))
    return np.array(feats, dtype=np.float64)


def toy_clip_features(clip: Clip) -> np.ndarray:
    """96-dim stand-in for I3D features.

    First half: time-mean of frame features. Second half: time-mean of
    absolute frame-feature differences, the temporal-consistency signal.
    """
    if clip.frame_count < 2:
        raise ValueError(f"clip features need >= 2 frames, got {clip.frame_count}")
    per_frame = np.stack([toy_frame_features(clip.frames[i]) for i in range(clip.frame_count)])
    mean_part = per_frame.mean(axis=0)
    delta_part = np.abs(np.diff(per_frame, axis=0)).mean(axis=0)
    return np.concatenate([mean_part, delta_part])


def clip_windows(clip: Clip, length: int = FVD_WINDOW) -> list[Clip]:
    """Non-overlapping fixed-length windows; a final short window is dropped."""
    windows = []
    for start in range(0, clip.frame_count - length + 1, length):
        windows.append(
            Clip(
                frames=clip.frames[start : start + length],
                fps=clip.fps,
                caption=clip.caption,
                name=f"{clip.name}[{start}:{start + length}]",
            )
        )
    return windows


FEATURE_MAGIC = "ccol-features"
FEATURE_VERSION = "v1"


def write_features(path: str | Path, fs: FeatureSet) -> None:
    """Write the text feature-file format."""
    n, d = fs.vectors.shape
    lines = [f"{FEATURE_MAGIC} {FEATURE_VERSION} {n} {d} {fs.unit} {fs.extractor_id}"]
    for row in fs.vectors:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_features(path: str | Path) -> FeatureSet:
    """Read the text feature-file format, validating the header."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ValueError(f"feature file {path} is empty")
    head = lines[0].split()
    if len(head) != 6 or head[0] != FEATURE_MAGIC or head[1] != FEATURE_VERSION:
        raise ValueError(f"feature file {path} has a bad header: {lines[0]!r}")
    count, dim, unit, extractor_id = int(head[2]), int(head[3]), head[4], head[5]
    if len(lines) - 1 != count:
        raise ValueError(f"feature file {path} declares {count} vectors, has {len(lines) - 1}")
    vectors = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    if vectors.shape != (count, dim):
        raise ValueError(f"feature file {path} vectors are {vectors.shape}, not ({count},{dim})")
    return FeatureSet(vectors=vectors, extractor_id=extractor_id, unit=unit)


@dataclass
class SurveyTally:
    """Per-option vote counts for one survey question."""

    question_id: str
    options: list[str]
    counts: list[int]
    participant_count: int

    def __post_init__(self) -> None:
        if len(self.options) != len(self.counts):
            raise ValueError("options and counts must align")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")
        if sum(self.counts) > self.participant_count:
            raise ValueError("single-choice tally exceeds participant count")

    def mos(self) -> list[float]:
        """The survey MOS reading: each count divided by the option count."""
        n = len(self.options)
        return [c / n for c in self.counts]

    def to_json_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "options": self.options,
            "counts": self.counts,
            "participant_count": self.participant_count,
            "mos": self.mos(),
        }


def mos_tally(
    question_id: str,
    votes: list[tuple[str, str]],
    options: Optional[list[str]] = None,
) -> SurveyTally:
    """Tally (participant, option) votes for one single-choice question.

    Options default to first-appearance order in the votes. A second
    vote by the same participant is an error.
    """
    seen: set[str] = set()
    opts = list(options) if options is not None else []
    counts: dict[str, int] = {o: 0 for o in opts}
    for participant, option in votes:
        if participant in seen:
            raise ValueError(
                f"duplicate vote by participant {participant!r} on question {question_id!r}"
            )
        seen.add(participant)
        if option not in counts:
            if options is not None:
                raise ValueError(
                    f"vote for unknown option {option!r} on question {question_id!r}"
                )
            opts.append(option)
            counts[option] = 0
        counts[option] += 1
    return SurveyTally(
        question_id=question_id,
        options=opts,
        counts=[counts[o] for o in opts],
        participant_count=len(seen),
    )


def read_votes_csv(path: str | Path) -> list[tuple[str, str, str]]:
    """Read (question_id, participant_id, option) rows from the votes CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"question_id", "participant_id", "option"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(
                f"votes CSV must have header question_id,participant_id,option, "
                f"got {reader.fieldnames}"
            )
        return [(r["question_id"], r["participant_id"], r["option"]) for r in reader]


def tally_votes(rows: list[tuple[str, str, str]]) -> list[SurveyTally]:
    """Group vote rows by question (first-appearance order) and tally each."""
    by_question: dict[str, list[tuple[str, str]]] = {}
    for question_id, participant, option in rows:
        by_question.setdefault(question_id, []).append((participant, option))
    return [mos_tally(q, votes) for q, votes in by_question.items()]
