"""Randomized-mask saliency generation, convergence checks, thresholds.

The estimator averages target-class scores of masked inputs, weighted by
the continuous mask values:

    S[u, v] = (1 / norm) * sum_i  f_c(blend(x, A, q_i)) * q_i[u, v]

where q_i is an upsampled random mask and A an arbitrary baseline image.
With the zero-after-preprocessing baseline this reduces to masking the
preprocessed input directly.  Accumulation runs in fixed, config-derived
chunks in ascending mask order, so a result is bit-reproducible across
processes and worker counts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import BaselineSpec, realize_baseline
from .classifiers import Classifier, argmax_class
from .core import SaliencyMap, as_image, normalize_saliency, saliency_l2_distance
from .errors import DataError, ParameterError
from .masking import apply_baseline, enumerate_all_masks, sample_low_res_masks, upsample_batch

__all__ = [
    "RiseConfig",
    "RiseResult",
    "ConvergenceReport",
    "generate_rise",
    "generate_rise_exact",
    "convergence_check",
    "threshold_from_histogram",
]

# masks evaluated per classifier call; a fixed constant so that chunk
# boundaries (hence float accumulation order) never depend on runtime state
_CHUNK = 256

SCALAR = "scalar"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class RiseConfig:
    """Parameters of one saliency run.

    ``target=None`` resolves to the maximum-activated class of the
    unmasked input.  ``normalization`` is ``scalar`` (divide by p*N) or
    ``empirical`` (divide per pixel by the summed mask values, falling
    back to p*N where that sum is below 1e-9).  ``fixed_crop`` pins all
    crop offsets to (0, 0) for comparisons against the exact enumerator.
    """

    n_masks: int
    w: int = 7
    h: int = 7
    p: float = 0.5
    seed: int = 0
    baseline: BaselineSpec = field(default_factory=BaselineSpec.inv)
    target: int | None = None
    normalization: str = SCALAR
    snapshot_interval: int = 128
    fixed_crop: bool = False

    def __post_init__(self):
        if self.n_masks < 1:
            raise ParameterError(f"n_masks must be >= 1, got {self.n_masks}")
        if self.snapshot_interval < 1:
            raise ParameterError(f"snapshot_interval must be >= 1, got {self.snapshot_interval}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p must be in [0, 1], got {self.p}")
        if self.normalization not in (SCALAR, EMPIRICAL):
            raise ParameterError(f"unknown normalization {self.normalization!r}")

    def digest(self) -> str:
        payload = {
            "n_masks": self.n_masks, "w": self.w, "h": self.h, "p": self.p,
            "seed": self.seed, "baseline": self.baseline.tag, "target": self.target,
            "normalization": self.normalization, "snapshot_interval": self.snapshot_interval,
            "fixed_crop": self.fixed_crop,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RiseResult:
    """Final map plus the incremental snapshots it grew through."""

    saliency: SaliencyMap
    snapshots: list[tuple[int, SaliencyMap]]
    config: RiseConfig


@dataclass(frozen=True)
class ConvergenceReport:
    """Pairwise distances among three independent runs against a threshold.

    ``traces`` maps each run pair (i, j), i < j, to a list of
    (mask_count, distance) points, one per snapshot.  ``converged`` is
    True iff all three final distances are below ``d_max``; ``d_bar`` is
    their mean.
    """

    runs: tuple[RiseResult, RiseResult, RiseResult]
    traces: dict[tuple[int, int], list[tuple[int, float]]]
    d_bar: float
    converged: bool
    d_max: float


def _snapshot_points(n: int, interval: int) -> list[int]:
    pts = list(range(interval, n + 1, interval))
    if not pts or pts[-1] != n:
        pts.append(n)
    return pts


def _boundaries(n: int, interval: int) -> list[int]:
    cuts = set(range(_CHUNK, n, _CHUNK))
    cuts.update(_snapshot_points(n, interval))
    return sorted(cuts)


def generate_rise(x, cfg: RiseConfig, clf: Classifier) -> RiseResult:
    """Estimate a saliency map for one input with Monte-Carlo masking."""
    img = as_image(x)
    m, n = img.shape[:2]
    if (m, n) != clf.expected_input:
        raise ParameterError(f"image is {(m, n)} but classifier expects {clf.expected_input}")
    if cfg.p == 0.0:
        raise ParameterError("p = 0 leaves every pixel occluded; the estimator is undefined")
    target = cfg.target if cfg.target is not None else argmax_class(clf, img)
    resolved = replace(cfg, target=target)
    base = realize_baseline(cfg.baseline, img, clf.preprocessor)
    batch = sample_low_res_masks(
        cfg.n_masks, cfg.w, cfg.h, cfg.p, cfg.seed, m, n, fixed_crop=cfg.fixed_crop
    )

    meta = {
        "method": "rise",
        "target": target,
        "baseline": cfg.baseline.tag,
        "config_digest": resolved.digest(),
    }
    weighted = np.zeros((m, n))
    mask_sum = np.zeros((m, n))
    snap_at = set(_snapshot_points(cfg.n_masks, cfg.snapshot_interval))
    snapshots: list[tuple[int, SaliencyMap]] = []
    start = 0
    for stop in _boundaries(cfg.n_masks, cfg.snapshot_interval):
        q = upsample_batch(batch.cells[start:stop], batch.offsets[start:stop], m, n)
        masked = q[:, :, :, None] * img + (1.0 - q[:, :, :, None]) * base.image
        scores = clf.predict_batch(masked)[:, target]
        if not np.all(np.isfinite(scores)):
            raise DataError("non-finite classifier score during mask evaluation")
        weighted += np.tensordot(scores, q, axes=(0, 0))
        mask_sum += q.sum(axis=0)
        start = stop
        if stop in snap_at:
            snapshots.append((stop, SaliencyMap(_normalize(weighted, mask_sum, stop, cfg), meta)))
    result = snapshots[-1][1]
    return RiseResult(result, snapshots, resolved)


def _normalize(weighted: np.ndarray, mask_sum: np.ndarray, count: int, cfg: RiseConfig) -> np.ndarray:
    if cfg.normalization == SCALAR:
        return weighted / (cfg.p * count)
    denom = np.where(mask_sum < 1e-9, cfg.p * count, mask_sum)
    return weighted / denom


def generate_rise_exact(x, cfg: RiseConfig, clf: Classifier) -> SaliencyMap:
    """Exact expectation of the estimator over all 2**(w*h) masks.

    Enumerates every binary mask at crop (0, 0) with its Bernoulli(p)
    probability; the sampled estimator converges to this map as the mask
    count grows.  Subject to the same w*h <= 20 guard as the enumerator.
    """
    img = as_image(x)
    m, n = img.shape[:2]
    if (m, n) != clf.expected_input:
        raise ParameterError(f"image is {(m, n)} but classifier expects {clf.expected_input}")
    if cfg.p == 0.0:
        raise ParameterError("p = 0 leaves every pixel occluded; the estimator is undefined")
    target = cfg.target if cfg.target is not None else argmax_class(clf, img)
    base = realize_baseline(cfg.baseline, img, clf.preprocessor)

    masks = enumerate_all_masks(cfg.w, cfg.h)
    cells = np.stack([c for c, _ in masks])
    ones = cells.reshape(cells.shape[0], -1).sum(axis=1)
    log_p = np.log(cfg.p) if cfg.p > 0 else -np.inf
    log_q = np.log1p(-cfg.p) if cfg.p < 1 else 0.0
    if cfg.p == 1.0:
        weights = (ones == cfg.w * cfg.h).astype(np.float64)
    else:
        weights = np.exp(ones * log_p + (cfg.w * cfg.h - ones) * log_q)

    total = np.zeros((m, n))
    mask_exp = np.zeros((m, n))
    for lo in range(0, cells.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, cells.shape[0])
        q = upsample_batch(cells[lo:hi], np.zeros((hi - lo, 2), dtype=np.int64), m, n)
        masked = q[:, :, :, None] * img + (1.0 - q[:, :, :, None]) * base.image
        scores = clf.predict_batch(masked)[:, target]
        total += np.tensordot(weights[lo:hi] * scores, q, axes=(0, 0))
        mask_exp += np.tensordot(weights[lo:hi], q, axes=(0, 0))
    if cfg.normalization == SCALAR:
        values = total / cfg.p
    else:
        values = total / np.where(mask_exp < 1e-9, cfg.p, mask_exp)
    meta = {"method": "rise-exact", "target": target, "baseline": cfg.baseline.tag,
            "config_digest": replace(cfg, target=target).digest()}
    return SaliencyMap(values, meta)


def convergence_check(
    x,
    cfg: RiseConfig,
    clf: Classifier,
    d_max: float,
    seed_stride: int = 1,
    distance_on: str = "raw",
) -> ConvergenceReport:
    """Run three independent saliency estimates and trace their distances.

    Runs use seeds (base, base + stride, base + 2*stride); stride 0
    reproduces the same run three times, which is the degenerate check
    that all distances vanish.  Distances are taken on raw accumulated
    values by default; ``distance_on="normalized"`` rescales each map to
    [0, 1] first.
    """
    if distance_on not in ("raw", "normalized"):
        raise ParameterError(f"distance_on must be 'raw' or 'normalized', got {distance_on!r}")
    runs = tuple(
        generate_rise(x, replace(cfg, seed=cfg.seed + i * seed_stride), clf) for i in range(3)
    )
    traces: dict[tuple[int, int], list[tuple[int, float]]] = {}
    finals = []
    for i in range(3):
        for j in range(i + 1, 3):
            pts = []
            for (ki, si), (kj, sj) in zip(runs[i].snapshots, runs[j].snapshots):
                assert ki == kj
                a, b = (normalize_saliency(si), normalize_saliency(sj)) if distance_on == "normalized" else (si, sj)
                pts.append((ki, saliency_l2_distance(a, b)))
            traces[(i, j)] = pts
            finals.append(pts[-1][1])
    return ConvergenceReport(
        runs=runs,
        traces=traces,
        d_bar=float(np.mean(finals)),
        converged=bool(all(d < d_max for d in finals)),
        d_max=float(d_max),
    )


def threshold_from_histogram(d_bars, bin_count: int) -> float:
    """Pick a distance threshold as the upper edge of the modal histogram bin.

    Bins are equal width over [min, max]; on ties the lower bin wins.  A
    single-valued list returns that value directly.
    """
    values = np.asarray(list(d_bars), dtype=np.float64)
    if values.size == 0:
        raise ParameterError("d_bars must be nonempty")
    if bin_count < 1:
        raise ParameterError(f"bin_count must be >= 1, got {bin_count}")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return lo
    counts, edges = np.histogram(values, bins=bin_count, range=(lo, hi))
    return float(edges[int(np.argmax(counts)) + 1])
