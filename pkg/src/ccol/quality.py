"""No-reference quality scoring used by exemplar selection.

The natural-scene-statistics front end is shared: MSCN coefficients
(I - mu) / (sigma + C) with a 7x7 Gaussian window (sigma = 7/6) and
C = 1.0 on the [0, 255] scale. From the MSCN field and its four
pairwise-product orientations we fit a generalized Gaussian (2 params)
and four asymmetric generalized Gaussians (4 params each), at two
scales, giving the 36-component feature vector used both for
whole-frame scoring and for the patch-statistics model distance.

Scores carry explicit polarity so selection can reconcile
lower-is-better distances with higher-is-better face-quality scorers.
The built-in face-quality proxy is region sharpness (variance of the
3x3 Laplacian response); a real face-quality model plugs in through
the external-scorer protocol.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np

from ccol.color import luma601_float
from ccol.errors import (
    DegenerateCorpusError,
    DimensionMismatchError,
    FrameTooSmallError,
    ScorerError,
)

LOWER_IS_BETTER = "lower-is-better"
HIGHER_IS_BETTER = "higher-is-better"

Polarity = Literal["lower-is-better", "higher-is-better"]

MSCN_C = 1.0
COV_EPS = 1e-6
PATCH_SIZE = 96
PATCH_STRIDE = 96

_DEGENERATE_EPS = 1e-12
_FALLBACK_SPREAD = 1e-6


@dataclass
class QualityScore:
    """A scalar quality judgment with declared polarity."""

    value: float
    polarity: Polarity
    scorer_id: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"quality score must be finite, got {self.value}")
        if self.polarity not in (LOWER_IS_BETTER, HIGHER_IS_BETTER):
            raise ValueError(f"unknown polarity {self.polarity!r}")


@dataclass
class QualityModel:
    """Multivariate-Gaussian summary of pristine NSS feature statistics."""

    mean: np.ndarray
    covariance: np.ndarray
    feature_dim: int

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.mean.shape[0] != self.feature_dim:
            raise ValueError(
                f"mean has dim {self.mean.shape[0]}, feature_dim says {self.feature_dim}"
            )
        if self.covariance.shape != (self.feature_dim, self.feature_dim):
            raise ValueError(f"covariance shape {self.covariance.shape} inconsistent")
        if np.abs(self.covariance - self.covariance.T).max() > 1e-9:
            raise ValueError("covariance is not symmetric within 1e-9")

    def save(self, path: str | Path) -> None:
        d = {
            "feature_dim": self.feature_dim,
            "mean": self.mean.tolist(),
            "covariance": self.covariance.reshape(-1).tolist(),
        }
        Path(path).write_text(json.dumps(d))

    @classmethod
    def load(cls, path: str | Path) -> "QualityModel":
        d = json.loads(Path(path).read_text())
        dim = int(d["feature_dim"])
        return cls(
            mean=np.array(d["mean"], dtype=np.float64),
            covariance=np.array(d["covariance"], dtype=np.float64).reshape(dim, dim),
            feature_dim=dim,
        )


@dataclass
class FaceRegion:
    """Pixel bounding box of a face within a frame."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 8 or self.h < 8:
            raise ValueError(f"face region must be at least 8x8, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"face region origin must be nonnegative: ({self.x},{self.y})")


def _as_plane(frame: np.ndarray) -> np.ndarray:
    """Luma plane (float64) from a frame; 2-D inputs pass through."""
    f = np.asarray(frame)
    if f.ndim == 3 and f.shape[2] == 3:
        return luma601_float(f)
    if f.ndim == 2:
        return f.astype(np.float64)
    raise ValueError(f"expected (H, W) plane or (H, W, 3) frame, got shape {f.shape}")


def _gaussian_kernel_1d(size: int = 7, sigma: float = 7.0 / 6.0) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


_KERNEL7 = _gaussian_kernel_1d()


def _filter_sep_replicate(plane: np.ndarray, k1d: np.ndarray) -> np.ndarray:
    """Separable same-size filtering with replicated (edge) borders."""
    r = len(k1d) // 2
    p = np.pad(plane, ((r, r), (0, 0)), mode="edge")
    out = np.zeros_like(plane, dtype=np.float64)
    for i, w in enumerate(k1d):
        out += w * p[i : i + plane.shape[0], :]
    p = np.pad(out, ((0, 0), (r, r)), mode="edge")
    out2 = np.zeros_like(plane, dtype=np.float64)
    for i, w in enumerate(k1d):
        out2 += w * p[:, i : i + plane.shape[1]]
    return out2


def mscn_coefficients(frame: np.ndarray) -> np.ndarray:
    """Mean-subtracted contrast-normalized field of a frame's luma plane."""
    plane = _as_plane(frame)
    if min(plane.shape) < 16:
        raise FrameTooSmallError(
            f"mscn_coefficients needs at least 16x16, got {plane.shape[1]}x{plane.shape[0]}"
        )
    # Work on an offset plane so constant input yields an exactly zero
    # field (the filter's weight sum is 1 only to float precision).
    d = plane - plane.flat[0]
    mu = _filter_sep_replicate(d, _KERNEL7)
    sigma = np.sqrt(np.maximum(_filter_sep_replicate(d * d, _KERNEL7) - mu * mu, 0.0))
    return (d - mu) / (sigma + MSCN_C)


# Precomputed gamma-ratio lookup tables for moment-matching fits.
_SHAPE_GRID = np.arange(0.2, 10.0 + 1e-9, 0.001)
_GGD_RATIO = np.array(
    [math.gamma(1 / g) * math.gamma(3 / g) / math.gamma(2 / g) ** 2 for g in _SHAPE_GRID]
)
_AGGD_RATIO = np.array(
    [math.gamma(2 / g) ** 2 / (math.gamma(1 / g) * math.gamma(3 / g)) for g in _SHAPE_GRID]
)


def fit_ggd(x: np.ndarray) -> tuple[float, float]:
    """Moment-matching generalized-Gaussian fit: (shape, variance).

    Degenerate all-zero input falls back to (2.0, 1e-6): the documented
    Gaussian-shape / epsilon-spread contract for constant frames.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    e_abs = np.abs(x).mean()
    e_sq = np.mean(x * x)
    if e_abs < _DEGENERATE_EPS:
        return 2.0, _FALLBACK_SPREAD
    rho = e_sq / (e_abs * e_abs)
    shape = float(_SHAPE_GRID[np.argmin(np.abs(_GGD_RATIO - rho))])
    return shape, float(e_sq)


def fit_aggd(x: np.ndarray) -> tuple[float, float, float, float]:
    """Asymmetric GGD fit: (shape, mean, left variance, right variance)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    left = x[x < 0]
    right = x[x > 0]
    if left.size == 0 or right.size == 0 or np.abs(x).mean() < _DEGENERATE_EPS:
        return 2.0, 0.0, _FALLBACK_SPREAD, _FALLBACK_SPREAD
    sigma_l = math.sqrt(np.mean(left * left))
    sigma_r = math.sqrt(np.mean(right * right))
    gamma_hat = sigma_l / sigma_r
    r_hat = np.abs(x).mean() ** 2 / np.mean(x * x)
    big_r = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    shape = float(_SHAPE_GRID[np.argmin(np.abs(_AGGD_RATIO - big_r))])
    mean = (sigma_r - sigma_l) * math.gamma(2 / shape) / math.gamma(1 / shape)
    return shape, float(mean), sigma_l**2, sigma_r**2


def _pairwise_products(m: np.ndarray) -> list[np.ndarray]:
    return [
        m[:, :-1] * m[:, 1:],        # horizontal
        m[:-1, :] * m[1:, :],        # vertical
        m[:-1, :-1] * m[1:, 1:],     # main diagonal
        m[:-1, 1:] * m[1:, :-1],     # anti diagonal
    ]


def _nss_features18(m: np.ndarray) -> list[float]:
    """GGD of the MSCN field + AGGD of its 4 product orientations."""
    feats = list(fit_ggd(m))
    for prod in _pairwise_products(m):
        feats.extend(fit_aggd(prod))
    return feats


def _half_scale(plane: np.ndarray) -> np.ndarray:
    """2x2 block mean; a trailing odd row/column is dropped."""
    h2, w2 = plane.shape[0] // 2, plane.shape[1] // 2
    return plane[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def brisque_features(frame: np.ndarray) -> np.ndarray:
    """36-component NSS feature vector (two scales x 18 features)."""
    plane = _as_plane(frame)
    if min(plane.shape) < 32:
        raise FrameTooSmallError(
            f"brisque_features needs at least 32x32, got {plane.shape[1]}x{plane.shape[0]}"
        )
    feats = _nss_features18(mscn_coefficients(plane))
    feats += _nss_features18(mscn_coefficients(_half_scale(plane)))
    return np.array(feats, dtype=np.float64)


def _patch_boxes(h: int, w: int) -> list[tuple[int, int, int, int]]:
    """Tile (y, x, ph, pw) boxes; a frame smaller than one patch is one box."""
    if h < PATCH_SIZE or w < PATCH_SIZE:
        return [(0, 0, h, w)]
    return [
        (y, x, PATCH_SIZE, PATCH_SIZE)
        for y in range(0, h - PATCH_SIZE + 1, PATCH_STRIDE)
        for x in range(0, w - PATCH_SIZE + 1, PATCH_STRIDE)
    ]


def patch_feature_vectors(frame: np.ndarray) -> np.ndarray:
    """(N, 36) per-patch NSS features over the 96x96 stride-96 grid."""
    plane = _as_plane(frame)
    if min(plane.shape) < 16:
        raise FrameTooSmallError(
            f"patch features need at least 16x16, got {plane.shape[1]}x{plane.shape[0]}"
        )
    m1 = mscn_coefficients(plane)
    half = _half_scale(plane)
    m2 = mscn_coefficients(half) if min(half.shape) >= 16 else None
    rows = []
    for y, x, ph, pw in _patch_boxes(*plane.shape):
        feats = _nss_features18(m1[y : y + ph, x : x + pw])
        if m2 is not None:
            y2, x2 = y // 2, x // 2
            feats += _nss_features18(m2[y2 : y2 + ph // 2, x2 : x2 + pw // 2])
        else:
            feats += _nss_features18(m1[y : y + ph, x : x + pw])
        rows.append(feats)
    return np.array(rows, dtype=np.float64)


def fit_quality_model(frames: list[np.ndarray]) -> QualityModel:
    """Fit the pristine-statistics Gaussian over pooled patch features."""
    if len(frames) < 2:
        raise DegenerateCorpusError(f"need at least 2 frames, got {len(frames)}")
    if all(float(np.ptp(_as_plane(f))) == 0.0 for f in frames):
        raise DegenerateCorpusError("corpus is all-constant frames; no statistics to fit")
    vectors = np.concatenate([patch_feature_vectors(f) for f in frames], axis=0)
    mean = vectors.mean(axis=0)
    cov = np.cov(vectors, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return QualityModel(mean=mean, covariance=cov, feature_dim=vectors.shape[1])


def gaussian_feature_distance(
    mean1: np.ndarray,
    cov1: np.ndarray,
    mean2: np.ndarray,
    cov2: np.ndarray,
    eps: float = COV_EPS,
) -> float:
    """sqrt(d^T ((S1+S2)/2 + eps*I)^-1 d) with d = mean1 - mean2."""
    mean1 = np.asarray(mean1, dtype=np.float64).reshape(-1)
    mean2 = np.asarray(mean2, dtype=np.float64).reshape(-1)
    if mean1.shape != mean2.shape:
        raise DimensionMismatchError(
            f"feature dims differ: {mean1.shape[0]} vs {mean2.shape[0]}"
        )
    pooled = (np.asarray(cov1, dtype=np.float64) + np.asarray(cov2, dtype=np.float64)) / 2.0
    pooled = pooled + eps * np.eye(mean1.shape[0])
    d = mean1 - mean2
    val = float(d @ np.linalg.solve(pooled, d))
    return math.sqrt(max(val, 0.0))


def niqe_score(frame: np.ndarray, model: QualityModel) -> QualityScore:
    """Distance between a frame's patch statistics and the pristine model."""
    vectors = patch_feature_vectors(frame)
    if vectors.shape[1] != model.feature_dim:
        raise DimensionMismatchError(
            f"frame features have dim {vectors.shape[1]}, model has {model.feature_dim}"
        )
    mean = vectors.mean(axis=0)
    if vectors.shape[0] > 1:
        cov = np.atleast_2d(np.cov(vectors, rowvar=False, ddof=1))
    else:
        cov = np.zeros((model.feature_dim, model.feature_dim))
    value = gaussian_feature_distance(mean, cov, model.mean, model.covariance)
    return QualityScore(value=value, polarity=LOWER_IS_BETTER, scorer_id="niqe")


def brisque_score(features: np.ndarray, model: QualityModel) -> QualityScore:
    """Model distance of a single 36-component feature vector."""
    v = np.asarray(features, dtype=np.float64).reshape(-1)
    if v.shape[0] != model.feature_dim:
        raise DimensionMismatchError(
            f"feature vector has dim {v.shape[0]}, model has {model.feature_dim}"
        )
    zero = np.zeros((model.feature_dim, model.feature_dim))
    value = gaussian_feature_distance(v, zero, model.mean, model.covariance)
    return QualityScore(value=value, polarity=LOWER_IS_BETTER, scorer_id="brisque")


_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def default_face_region(frame: np.ndarray) -> FaceRegion:
    """Centered 50% x 50% box: the speaker-centric framing assumption."""
    h, w = np.asarray(frame).shape[:2]
    return FaceRegion(x=w // 4, y=h // 4, w=w // 2, h=h // 2)


def face_quality_score(
    frame: np.ndarray, region: Optional[FaceRegion] = None
) -> QualityScore:
    """Built-in face-quality proxy: Laplacian-response variance in the region.

    Higher is better (sharper). The variance is over the region's valid
    3x3 neighborhood responses, so the score is translation invariant
    for fixed region content.
    """
    plane = _as_plane(frame)
    h, w = plane.shape
    if region is None:
        region = default_face_region(frame)
    if region.x + region.w > w or region.y + region.h > h:
        raise ValueError(
            f"face region ({region.x},{region.y},{region.w},{region.h}) "
            f"exceeds frame {w}x{h}"
        )
    crop = plane[region.y : region.y + region.h, region.x : region.x + region.w]
    resp = (
        crop[:-2, 1:-1] + crop[2:, 1:-1] + crop[1:-1, :-2] + crop[1:-1, 2:]
        - 4.0 * crop[1:-1, 1:-1]
    )
    value = float(np.mean((resp - resp.mean()) ** 2))
    return QualityScore(value=value, polarity=HIGHER_IS_BETTER, scorer_id="sharpness-proxy")


Scorer = Callable[[np.ndarray], QualityScore]


def make_face_scorer(region: Optional[FaceRegion] = None) -> Scorer:
    """Scorer closure over an optional fixed face region."""

    def score(frame: np.ndarray) -> QualityScore:
        return face_quality_score(frame, region)

    return score


@dataclass
class ExternalScorer:
    """Protocol wrapper for an external quality-scoring executable.

    The executable is invoked as ``<command...> score <frame.png>`` and
    must print one decimal number to stdout and exit 0.
    """

    command: list[str]
    polarity: Polarity
    scorer_id: str = "external"
    timeout: float = 60.0

    @classmethod
    def from_config(cls, cfg: dict) -> "ExternalScorer":
        cmd = cfg["command"]
        if isinstance(cmd, str):
            cmd = shlex.split(cmd)
        return cls(
            command=list(cmd),
            polarity=cfg["polarity"],
            scorer_id=cfg.get("id", "external"),
            timeout=cfg.get("timeout", 60.0),
        )

    def __call__(self, frame: np.ndarray) -> QualityScore:
        from ccol.frameio import save_frame

        with tempfile.TemporaryDirectory(prefix="ccol-scorer-") as td:
            png = Path(td) / "frame.png"
            save_frame(frame, png)
            try:
                proc = subprocess.run(
                    [*self.command, "score", str(png)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except subprocess.TimeoutExpired as e:
                raise ScorerError(f"scorer {self.scorer_id} timed out after {self.timeout}s") from e
        if proc.returncode != 0:
            raise ScorerError(
                f"scorer {self.scorer_id} exited {proc.returncode}: {proc.stderr.strip()}"
            )
        try:
            value = float(proc.stdout.strip().split()[0])
        except (IndexError, ValueError) as e:
            raise ScorerError(
                f"scorer {self.scorer_id} printed no parseable number: {proc.stdout!r}"
            ) from e
        return QualityScore(value=value, polarity=self.polarity, scorer_id=self.scorer_id)
