"""Image tensors, preprocessing, and saliency-map value types.

Images are float64 arrays of shape (m, n, 3) in raw pixel units
(nominally [0, 255]).  Values are not clamped after arithmetic; file I/O
quantizes to 8-bit only at the boundary so that exact algebraic
identities hold on the in-memory representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from PIL import Image

from .errors import DataError, DimensionError, ParameterError

__all__ = [
    "Preprocessor",
    "SaliencyMap",
    "as_image",
    "preprocess",
    "inverse_preprocess",
    "saliency_l2_distance",
    "normalize_saliency",
    "resize_image",
    "read_image_png",
    "write_image_png",
    "save_saliency_npy",
    "load_saliency",
]


def as_image(data) -> np.ndarray:
    """Coerce to a float64 (m, n, 3) image array, validating the shape."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"expected (m, n, 3) image, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Preprocessor:
    """Per-channel mean shift and scale applied before the network body.

    ``apply`` computes (x - mean) * scale per channel; ``invert`` undoes it.
    The two are mutual inverses to within 1e-9 per element for any scale
    component >= 1e-6.
    """

    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.scale) != 3:
            raise ParameterError("mean and scale must each have 3 components")
        if any(s <= 0 for s in self.scale):
            raise ParameterError(f"scale components must be positive, got {self.scale}")

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=np.float64)

    @property
    def scale_array(self) -> np.ndarray:
        return np.asarray(self.scale, dtype=np.float64)


def preprocess(x, g: Preprocessor) -> np.ndarray:
    """Mean-shift and scale an image: out[..., c] = (x[..., c] - mean[c]) * scale[c]."""
    return (as_image(x) - g.mean_array) * g.scale_array


def inverse_preprocess(x, g: Preprocessor) -> np.ndarray:
    """Invert :func:`preprocess`: out[..., c] = x[..., c] / scale[c] + mean[c]."""
    return as_image(x) / g.scale_array + g.mean_array


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel real-valued importance field with generation provenance.

    ``values`` is a read-only float64 (m, n) array; all entries must be
    finite.  ``meta`` records how the map was produced (method name,
    config digest, target class) and travels with the map through
    serialization.
    """

    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"saliency values must be (m, n), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("saliency values must be finite (no NaN/Inf)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def saliency_l2_distance(a: SaliencyMap, b: SaliencyMap) -> float:
    """Euclidean distance between two maps over raw (unnormalized) values."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.values - b.values
    return float(np.sqrt(np.sum(diff * diff)))


def normalize_saliency(s: SaliencyMap) -> SaliencyMap:
    """Affine rescale so min -> 0 and max -> 1.

    Constant maps normalize to all 0.5: that keeps the output in range
    without dividing by zero.
    """
    v = s.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        out = np.full(v.shape, 0.5)
    else:
        out = (v - lo) / (hi - lo)
    return SaliencyMap(out, dict(s.meta, normalized=True))


def resize_image(x, m: int, n: int, method: str = "bilinear") -> np.ndarray:
    """Resize an image to (m, n) with nearest or bilinear sampling.

    Uses the half-pixel-center convention with edge clamping.  This is
    the only geometry transform in the toolkit; inputs are expected to
    already be RGB.
    """
    src = as_image(x)
    sm, sn = src.shape[:2]
    if m < 1 or n < 1:
        raise ParameterError("target size must be positive")
    if (sm, sn) == (m, n):
        return src.copy()
    ys = (np.arange(m) + 0.5) * (sm / m) - 0.5
    xs = (np.arange(n) + 0.5) * (sn / n) - 0.5
    if method == "nearest":
        yi = np.clip(np.rint(ys).astype(np.int64), 0, sm - 1)
        xi = np.clip(np.rint(xs).astype(np.int64), 0, sn - 1)
        return src[yi][:, xi]
    if method != "bilinear":
        raise ParameterError(f"unknown resize method {method!r}")
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = (ys - y0)[:, None, None]
    tx = (xs - x0)[None, :, None]
    y0c = np.clip(y0, 0, sm - 1)
    y1c = np.clip(y0 + 1, 0, sm - 1)
    x0c = np.clip(x0, 0, sn - 1)
    x1c = np.clip(x0 + 1, 0, sn - 1)
    top = src[y0c][:, x0c] * (1 - tx) + src[y0c][:, x1c] * tx
    bot = src[y1c][:, x0c] * (1 - tx) + src[y1c][:, x1c] * tx
    return top * (1 - ty) + bot * ty


def read_image_png(path) -> np.ndarray:
    """Read an image file into a float64 (m, n, 3) array of raw pixel values."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64)


def write_image_png(path, x) -> None:
    """Quantize an image to 8-bit RGB and write it as PNG."""
    arr = np.asarray(x)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(as_image(arr)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_saliency_npy(path, s: SaliencyMap) -> None:
    """Write the map values as a little-endian float64 (m, n) NPY file."""
    np.save(path, s.values.astype("<f8"))


def load_saliency(path) -> SaliencyMap:
    """Load a saliency map from an NPY file or a grayscale image file.

    NPY files must hold an (m, n) float array.  Image files are converted
    to grayscale; pixel values become importances in [0, 255].
    """
    p = str(path)
    if p.endswith(".npy"):
        v = np.load(p)
        if v.ndim != 2:
            raise DataError(f"expected 2-D saliency array in {p}, got shape {v.shape}")
        return SaliencyMap(np.asarray(v, dtype=np.float64), {"source": p})
    with Image.open(p) as img:
        v = np.asarray(img.convert("L"), dtype=np.float64)
    return SaliencyMap(v, {"source": p})
