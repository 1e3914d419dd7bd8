"""Color-space conversions, desaturation, and chroma/luminance decomposition.

Conventions, fixed so results are bit-reproducible:

- sRGB transfer per IEC 61966-2-1 (linear segment below 0.04045 / 0.0031308).
- CIELAB under D65, 2-degree observer. The white point is taken as the row
  sums of the RGB->XYZ matrix so that exactly-gray pixels map to exactly
  zero chroma (to float precision) instead of inheriting rounding noise
  from independently published constants.
- Desaturation uses Rec.601 luma, computed in integer arithmetic as
  (299*r + 587*g + 114*b + 500) // 1000, i.e. round-half-up of
  0.299r + 0.587g + 0.114b. This makes desaturate exactly idempotent.
- All float->uint8 quantization is round-half-up.

Frames are (H, W, 3) uint8 arrays; Lab values are float64 arrays with a
trailing axis of (L, a, b), L in [0, 100].
"""

from __future__ import annotations

import numpy as np

# sRGB (D65) RGB<->XYZ. The inverse is computed, not transcribed, so the
# round trip is lossless to float precision.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0

# Rec.601 luma weights scaled to integers summing to 1000.
_LUMA_WEIGHTS = (299, 587, 114)


def round_half_up(x: np.ndarray | float) -> np.ndarray:
    """Round half away from zero toward +inf (0.5 -> 1), elementwise."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def srgb_to_linear(c: np.ndarray | float) -> np.ndarray:
    """Map sRGB channel values in [0, 255] to linear intensity in [0, 1]."""
    c = np.asarray(c, dtype=np.float64) / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(lin: np.ndarray | float) -> np.ndarray:
    """Map linear intensity to sRGB channel values on the [0, 255] scale.

    Output is float and may fall outside [0, 255] for out-of-gamut input;
    callers quantize/clamp.
    """
    lin = np.asarray(lin, dtype=np.float64)
    c = np.where(
        lin <= 0.0031308,
        lin * 12.92,
        1.055 * np.power(np.maximum(lin, 0.0), 1.0 / 2.4) - 0.055,
    )
    return c * 255.0


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(ft: np.ndarray) -> np.ndarray:
    return np.where(ft > _DELTA, ft**3, 3 * _DELTA**2 * (ft - 4.0 / 29.0))


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert (..., 3) sRGB values in [0, 255] to (..., 3) CIELAB."""
    lin = srgb_to_linear(np.asarray(rgb))
    xyz = lin @ _RGB_TO_XYZ.T / _WHITE
    f = _lab_f(xyz)
    lab = np.empty(f.shape, dtype=np.float64)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb_float(lab: np.ndarray) -> np.ndarray:
    """Convert (..., 3) CIELAB to unquantized sRGB on the [0, 255] scale.

    Out-of-gamut chroma yields channel values outside [0, 255]; nothing
    is clamped here.
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    f = np.stack([fy + lab[..., 1] / 500.0, fy, fy - lab[..., 2] / 200.0], axis=-1)
    xyz = _lab_f_inv(f) * _WHITE
    return linear_to_srgb(xyz @ _XYZ_TO_RGB.T)


def lab_to_rgb(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert CIELAB to uint8 sRGB, clamping out-of-gamut values.

    Returns (rgb, clipped) where clipped is a boolean mask (per input
    pixel) flagging values that had to be clamped into [0, 255].
    """
    rgb_f = lab_to_rgb_float(lab)
    quant = round_half_up(rgb_f)
    clipped = ((quant < 0.0) | (quant > 255.0)).any(axis=-1)
    return np.clip(quant, 0.0, 255.0).astype(np.uint8), clipped


def luma601(frame: np.ndarray) -> np.ndarray:
    """Integer Rec.601 luma of an (H, W, 3) uint8 frame, round-half-up."""
    f = np.asarray(frame, dtype=np.int64)
    wr, wg, wb = _LUMA_WEIGHTS
    return ((wr * f[..., 0] + wg * f[..., 1] + wb * f[..., 2] + 500) // 1000).astype(
        np.uint8
    )


def luma601_float(frame: np.ndarray) -> np.ndarray:
    """Unquantized Rec.601 luma plane, float64 on the [0, 255] scale."""
    f = np.asarray(frame, dtype=np.float64)
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def desaturate(frame: np.ndarray) -> np.ndarray:
    """Replace each pixel with its Rec.601 gray level (r == g == b).

    Idempotent: gray pixels are fixed points because the integer weights
    sum to exactly 1000.
    """
    y = luma601(frame)
    return np.repeat(y[..., None], 3, axis=-1)


def is_grayscale(frame: np.ndarray) -> bool:
    """True when every pixel satisfies r == g == b."""
    f = np.asarray(frame)
    return bool(np.all(f[..., 0] == f[..., 1]) and np.all(f[..., 1] == f[..., 2]))


def validate_frame(frame: np.ndarray, *, name: str = "frame") -> np.ndarray:
    """Check that frame is an (H, W, 3) uint8 array and return it."""
    f = np.asarray(frame)
    if f.ndim != 3 or f.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {f.shape}")
    if f.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {f.dtype}")
    return f
