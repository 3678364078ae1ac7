"""Random low-resolution masks, bilinear upsampling with crop, and masking.

Mask sampling uses the counter-based Philox-4x64 generator.  Each mask
owns a fixed block of the counter space (its substream), so a batch can
be generated in one vectorized call, any single mask can be regenerated
independently of the others, and batches are bit-reproducible from
(seed, params) alone.

Upsampling follows the randomized-crop construction: a binary (h, w)
cell grid is bilinearly interpolated onto a canvas of (h+1)*s_y by
(w+1)*s_x pixels, where s_y = ceil(m/h) and s_x = ceil(n/w) are the cell
sizes in pixels.  Cell (i, j) sits at the lattice point
(i*s_y + s_y//2, j*s_x + s_x//2), so the clamped edge regions outside
the outermost cell centers are balanced at both ends of the canvas.
An (m, n) window cut at a random offset in [0, s_y) x [0, s_x) turns
cell-grid randomness into sub-cell positional randomness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import ceil

import numpy as np
from numpy.random import Philox

from .core import as_image
from .errors import DataError, DimensionError, ParameterError, SizeError

__all__ = [
    "MaskParams",
    "MaskBatch",
    "cell_size",
    "sample_low_res_masks",
    "regenerate_mask",
    "upsample_and_crop",
    "upsample_batch",
    "apply_baseline",
    "enumerate_all_masks",
    "save_mask_batch",
    "load_mask_batch",
]

_MAGIC = b"PEMB\x01"

# Each mask consumes h*w cell draws plus one draw per crop axis, padded
# to a whole number of Philox counter blocks (4 words per block).
def _words_per_mask(w: int, h: int) -> int:
    return 4 * ceil((h * w + 2) / 4)


def _to_unit_floats(words: np.ndarray) -> np.ndarray:
    # top 53 bits of each 64-bit word, same mapping numpy's Generator uses
    return (words >> np.uint64(11)) * (1.0 / (1 << 53))


def cell_size(m: int, n: int, w: int, h: int) -> tuple[int, int]:
    """Pixel size (s_y, s_x) of one low-res cell for an (m, n) image."""
    return ceil(m / h), ceil(n / w)


@dataclass(frozen=True)
class MaskParams:
    """Sampling parameters; together with the seed they determine a batch."""

    count: int
    w: int
    h: int
    p: float
    m: int
    n: int

    def __post_init__(self):
        if self.count < 1:
            raise ParameterError(f"count must be >= 1, got {self.count}")
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"mask cells must be >= 1, got w={self.w}, h={self.h}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p must be in [0, 1], got {self.p}")
        if self.m < 1 or self.n < 1:
            raise ParameterError(f"image size must be positive, got ({self.m}, {self.n})")


@dataclass(frozen=True)
class MaskBatch:
    """An ordered batch of low-res masks with their crop offsets.

    ``cells`` is (count, h, w) uint8 in {0, 1}; ``offsets`` is (count, 2)
    int64 rows of (dy, dx).  Regenerating with the same (seed, params)
    yields a bit-identical batch.
    """

    cells: np.ndarray
    offsets: np.ndarray
    seed: int
    params: MaskParams
    fixed_crop: bool = False

    def __post_init__(self):
        self.cells.setflags(write=False)
        self.offsets.setflags(write=False)

    def __len__(self) -> int:
        return self.params.count


def sample_low_res_masks(
    count: int,
    w: int,
    h: int,
    p: float,
    seed: int,
    m: int,
    n: int,
    fixed_crop: bool = False,
) -> MaskBatch:
    """Draw ``count`` binary (h, w) masks with independent Bernoulli(p) cells.

    Crop offsets are uniform over the legal range [0, s_y) x [0, s_x)
    determined by the (m, n) image the masks will be upsampled to; with
    ``fixed_crop`` every offset is forced to (0, 0) instead (used by the
    exact-enumeration comparisons).
    """
    params = MaskParams(count, w, h, p, m, n)
    s_y, s_x = cell_size(m, n, w, h)
    wpm = _words_per_mask(w, h)
    words = Philox(key=seed).random_raw(count * wpm).reshape(count, wpm)
    u = _to_unit_floats(words)
    cells = (u[:, : h * w] < p).astype(np.uint8).reshape(count, h, w)
    if fixed_crop:
        offsets = np.zeros((count, 2), dtype=np.int64)
    else:
        dy = np.minimum((u[:, h * w] * s_y).astype(np.int64), s_y - 1)
        dx = np.minimum((u[:, h * w + 1] * s_x).astype(np.int64), s_x - 1)
        offsets = np.stack([dy, dx], axis=1)
    return MaskBatch(cells, offsets, seed, params, fixed_crop)


def regenerate_mask(seed: int, index: int, params: MaskParams) -> tuple[np.ndarray, tuple[int, int]]:
    """Regenerate mask ``index`` of a batch from its own substream.

    Equals row ``index`` of :func:`sample_low_res_masks` bit-for-bit;
    masks can therefore be produced in any order or in parallel.
    """
    if not 0 <= index < params.count:
        raise ParameterError(f"index {index} outside batch of {params.count}")
    w, h = params.w, params.h
    wpm = _words_per_mask(w, h)
    bg = Philox(key=seed)
    bg.advance(index * (wpm // 4))  # advance() counts 4-word counter blocks
    u = _to_unit_floats(bg.random_raw(wpm))
    cells = (u[: h * w] < params.p).astype(np.uint8).reshape(h, w)
    s_y, s_x = cell_size(params.m, params.n, w, h)
    dy = int(min(int(u[h * w] * s_y), s_y - 1))
    dx = int(min(int(u[h * w + 1] * s_x), s_x - 1))
    return cells, (dy, dx)


def _axis_weights(n_cells: int, out_len: int, cell: int, offset: int) -> np.ndarray:
    """(out_len, n_cells) bilinear weights along one axis for one crop offset."""
    if not 0 <= offset < cell:
        raise ParameterError(f"crop offset {offset} outside [0, {cell})")
    pos = (np.arange(out_len) + offset - cell // 2) / cell
    pos = np.clip(pos, 0.0, n_cells - 1.0)
    i0 = np.minimum(np.floor(pos).astype(np.int64), n_cells - 1)
    t = pos - i0
    i1 = np.minimum(i0 + 1, n_cells - 1)
    wmat = np.zeros((out_len, n_cells))
    rows = np.arange(out_len)
    np.add.at(wmat, (rows, i0), 1.0 - t)
    np.add.at(wmat, (rows, i1), t)
    return wmat


def upsample_batch(cells: np.ndarray, offsets: np.ndarray, m: int, n: int) -> np.ndarray:
    """Upsample a (N, h, w) cell batch to (N, m, n) continuous masks.

    Masks sharing a crop offset are transformed with one pair of weight
    matrices; the result is written back at the original batch index, so
    output order never depends on the grouping.
    """
    cells = np.asarray(cells, dtype=np.float64)
    N, h, w = cells.shape
    s_y, s_x = cell_size(m, n, w, h)
    out = np.empty((N, m, n))
    uniq, inverse = np.unique(np.asarray(offsets), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for k, (dy, dx) in enumerate(uniq):
        wy = _axis_weights(h, m, s_y, int(dy))
        wx = _axis_weights(w, n, s_x, int(dx))
        idx = np.nonzero(inverse == k)[0]
        cols = np.tensordot(cells[idx], wx, axes=([2], [1]))  # (B, h, n)
        out[idx] = np.tensordot(cols, wy, axes=([1], [1])).transpose(0, 2, 1)
    return out


def upsample_and_crop(mask: np.ndarray, m: int, n: int, crop_offset: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Upsample one binary (h, w) mask to a continuous (m, n) mask in [0, 1].

    The output equals the cell value exactly at cell-center pixels, i.e.
    wherever (i*s_y + s_y//2 - dy, j*s_x + s_x//2 - dx) lands inside the
    window.
    """
    cells = np.asarray(mask)
    if cells.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got shape {cells.shape}")
    dy, dx = crop_offset
    s_y, s_x = cell_size(m, n, cells.shape[1], cells.shape[0])
    if not (0 <= dy < s_y and 0 <= dx < s_x):
        raise ParameterError(f"crop offset {crop_offset} outside [0, {s_y}) x [0, {s_x})")
    return upsample_batch(cells[None], np.array([[dy, dx]]), m, n)[0]


def apply_baseline(x, a, mask: np.ndarray) -> np.ndarray:
    """Blend input and baseline per pixel: M * X + (1 - M) * A.

    The (m, n) mask broadcasts across the 3 channels; mask value 1 keeps
    the input pixel, 0 substitutes the baseline pixel.
    """
    xi, ai = as_image(x), as_image(a)
    mk = np.asarray(mask, dtype=np.float64)
    if xi.shape != ai.shape:
        raise DimensionError(f"input {xi.shape} vs baseline {ai.shape}")
    if mk.shape != xi.shape[:2]:
        raise DimensionError(f"mask {mk.shape} vs image {xi.shape[:2]}")
    m3 = mk[:, :, None]
    return m3 * xi + (1.0 - m3) * ai


def enumerate_all_masks(w: int, h: int) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """All 2**(w*h) binary masks in lexicographic cell order, crop (0, 0).

    The first cell in row-major order is the most significant bit of the
    mask's index.  Guarded to w*h <= 20; this is a test oracle, not a
    production path.
    """
    bits = w * h
    if bits > 20:
        raise SizeError(f"w*h = {bits} exceeds enumeration guard of 20")
    idx = np.arange(2**bits, dtype=np.uint32)[:, None]
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)[None, :]
    cells = ((idx >> shifts) & 1).astype(np.uint8).reshape(-1, h, w)
    return [(cells[i], (0, 0)) for i in range(cells.shape[0])]


def save_mask_batch(path, batch: MaskBatch) -> None:
    """Write a batch sidecar: header only, body regenerated on load."""
    header = {
        "seed": batch.seed,
        "fixed_crop": batch.fixed_crop,
        "params": {
            "count": batch.params.count,
            "w": batch.params.w,
            "h": batch.params.h,
            "p": batch.params.p,
            "m": batch.params.m,
            "n": batch.params.n,
        },
    }
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + len(payload).to_bytes(4, "little") + payload)


def load_mask_batch(path) -> MaskBatch:
    """Regenerate a batch from a sidecar written by :func:`save_mask_batch`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"{path} is not a mask-batch sidecar")
    size = int.from_bytes(blob[len(_MAGIC) : len(_MAGIC) + 4], "little")
    header = json.loads(blob[len(_MAGIC) + 4 : len(_MAGIC) + 4 + size])
    p = header["params"]
    return sample_low_res_masks(
        p["count"], p["w"], p["h"], p["p"], header["seed"], p["m"], p["n"],
        fixed_crop=header["fixed_crop"],
    )
