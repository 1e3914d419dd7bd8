"""Shared fixtures: synthetic frames, clips, and on-disk clips."""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

from ccol.backends import apply_chroma_to_gray, luma_band_masks
from ccol.color import desaturate
from ccol.frameio import Clip, clip_from_frames, save_clip

# Caption + scorer used by the temporal-consistency fixtures: the caption
# maps the bright band to orange and the dark band to blue, the fixture
# clip is colored the same way, and the skin-prior scorer lets selection
# find the low-jitter candidate (the chroma-aware signal a real
# face-quality model would provide).
ORDERING_CAPTION = "an orange face in front of a blue background"
SKIN_SCORER_PATH = Path(__file__).parent / "fixtures" / "skin_scorer.py"


def skin_scorer_config() -> dict:
    return {
        "command": [sys.executable, str(SKIN_SCORER_PATH)],
        "polarity": "lower-is-better",
        "id": "skin-prior",
    }


def constant_frame(h: int, w: int, value) -> np.ndarray:
    f = np.empty((h, w, 3), dtype=np.uint8)
    f[...] = value
    return f


def random_frame(rng: np.random.Generator, h: int = 32, w: int = 32) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def textured_frame(seed: int, h: int = 128, w: int = 128) -> np.ndarray:
    """Smooth blobs + gradients + mild noise: a natural-statistics stand-in."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 120 + 50 * np.sin(xx / 17.0) * np.cos(yy / 23.0)
    for _ in range(10):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        r0, amp = rng.uniform(6, 40), rng.uniform(-60, 60)
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r0**2))
    img = np.clip(img + rng.normal(0, 3, img.shape), 0, 255)
    return np.repeat(img.astype(np.uint8)[..., None], 3, axis=-1)


def moving_disk_clip(
    frames: int = 24, h: int = 64, w: int = 64, fps: float = 25.0, colored: bool = True
) -> Clip:
    """Synthetic speaker-style clip: a bright warm disk drifting over a
    darker cool background, with a monotone luma-to-chroma relationship
    so exemplar chroma transfer can reconstruct it."""
    out = []
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for t in range(frames):
        cx = w * 0.35 + 0.25 * w * np.sin(2 * np.pi * t / frames)
        cy = h * 0.45 + 0.15 * h * np.cos(2 * np.pi * t / frames)
        r = min(h, w) * 0.22
        disk = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r**2))
        luma = np.clip(70 + 140 * disk + 12 * np.sin(xx / 9.0), 20, 235)
        gray = np.round(luma).astype(np.uint8)
        if not colored:
            out.append(np.repeat(gray[..., None], 3, axis=-1))
            continue
        # warm chroma for bright content, cool for dark, scaled smoothly
        a_plane = (luma - 120.0) * 0.25
        b_plane = (luma - 100.0) * 0.20
        out.append(apply_chroma_to_gray(gray.astype(np.int64), a_plane, b_plane))
    return clip_from_frames(out, fps, caption=None, name="moving-disk")


def banded_disk_clip(frames: int = 24, h: int = 128, w: int = 128) -> Clip:
    """Ordering fixture: the moving-disk clip colored exactly as the
    ORDERING_CAPTION's band rules describe (orange bright band, blue dark
    band, neutral mid band, no jitter)."""
    out = []
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    hues = {"high": 30.0, "low": 250.0}
    for t in range(frames):
        cx = w * 0.35 + 0.25 * w * np.sin(2 * np.pi * t / frames)
        cy = h * 0.45 + 0.15 * h * np.cos(2 * np.pi * t / frames)
        r = min(h, w) * 0.22
        disk = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r**2))
        luma = np.clip(70 + 140 * disk + 12 * np.sin(xx / 9.0), 20, 235)
        gray = np.round(luma).astype(np.uint8)
        masks = luma_band_masks(gray)
        a_plane = np.zeros((h, w))
        b_plane = np.zeros((h, w))
        for band, hue in hues.items():
            theta = math.radians(hue)
            a_plane[masks[band]] = 30.0 * math.cos(theta)
            b_plane[masks[band]] = 30.0 * math.sin(theta)
        out.append(apply_chroma_to_gray(gray.astype(np.int64), a_plane, b_plane))
    return clip_from_frames(out, 25.0, caption=ORDERING_CAPTION, name="banded-disk")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)


@pytest.fixture
def disk_clip() -> Clip:
    return moving_disk_clip()


@pytest.fixture
def disk_clip_on_disk(tmp_path, disk_clip):
    """Color clip saved to disk; returns (manifest_path, clip)."""
    save_clip(disk_clip, tmp_path / "clip")
    return tmp_path / "clip" / "clip.json", disk_clip


@pytest.fixture
def gray_disk_clip(disk_clip) -> Clip:
    frames = [desaturate(disk_clip.frames[i]) for i in range(disk_clip.frame_count)]
    return clip_from_frames(frames, disk_clip.fps, name="moving-disk-gray")
