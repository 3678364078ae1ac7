"""Occlusion curves: pixel ranking, MoRF/LeRF, AOC/AUC, map comparison.

A saliency map induces a pixel ranking; the curve engine cumulatively
replaces ranked pixels with the corresponding baseline pixels and records
the target-class score after every step.  Replacing most-relevant pixels
first (MoRF) should collapse the score quickly, so a larger area over
the curve is better; replacing least-relevant first (LeRF) should keep
it high, so a larger area under the curve is better.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .baselines import BaselineImage
from .classifiers import Classifier
from .core import SaliencyMap, as_image
from .errors import DimensionError, ParameterError

__all__ = [
    "MOST_RELEVANT_FIRST",
    "LEAST_RELEVANT_FIRST",
    "MORF",
    "LERF",
    "PixelRanking",
    "PerturbationCurve",
    "MetricScore",
    "rank_pixels",
    "perturbation_curve",
    "auc",
    "aoc",
    "curve_score",
    "CellComparison",
    "ComparisonMatrix",
    "compare_saliency",
]

MOST_RELEVANT_FIRST = "most_relevant_first"
LEAST_RELEVANT_FIRST = "least_relevant_first"
MORF = "morf"
LERF = "lerf"

# score ties closer than this count as a draw in comparisons
TIE_EPS = 1e-9

_PRED_BATCH = 64


@dataclass(frozen=True)
class PixelRanking:
    """A permutation of the m*n row-major pixel indices."""

    order: np.ndarray
    direction: str

    def __post_init__(self):
        self.order.setflags(write=False)


def rank_pixels(s: SaliencyMap, direction: str) -> PixelRanking:
    """Sort pixel indices by saliency; ties break by ascending row-major index."""
    flat = s.values.ravel()
    if direction == MOST_RELEVANT_FIRST:
        order = np.argsort(-flat, kind="stable")
    elif direction == LEAST_RELEVANT_FIRST:
        order = np.argsort(flat, kind="stable")
    else:
        raise ParameterError(f"unknown ranking direction {direction!r}")
    return PixelRanking(order.astype(np.int64), direction)


@dataclass(frozen=True)
class PerturbationCurve:
    """The (alpha_k, s_k) sequence recorded while occluding an input.

    alpha is the occluded fraction (0 at the intact input, 1 once every
    pixel is replaced); scores are target-class probabilities.  The last
    image equals the baseline exactly, so s_L is the baseline's own
    score.
    """

    alphas: np.ndarray
    scores: np.ndarray
    r: int
    metric: str
    baseline_tag: str
    target: int

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        s = np.asarray(self.scores, dtype=np.float64)
        if a.shape != s.shape or a.ndim != 1 or a.size < 1:
            raise DimensionError(f"alphas {a.shape} and scores {s.shape} must be equal-length 1-D")
        a.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "scores", s)

    @property
    def s0(self) -> float:
        return float(self.scores[0])


@dataclass(frozen=True)
class MetricScore:
    kind: str  # "aoc" | "auc"
    value: float


def perturbation_curve(
    x,
    baseline: BaselineImage,
    ranking: PixelRanking,
    clf: Classifier,
    target: int,
    r: int = 1,
) -> PerturbationCurve:
    """Occlude ranked pixels cumulatively, r per step, recording scores.

    Step k replaces ranked pixels [(k-1)*r, k*r) in all three channels
    with the baseline's pixels; L = ceil(m*n / r) steps replace
    everything.  Scores are batched through the classifier but recorded
    in step order.
    """
    img = as_image(x)
    m, n = img.shape[:2]
    if baseline.image.shape != img.shape:
        raise DimensionError(f"baseline {baseline.image.shape} vs input {img.shape}")
    if ranking.order.size != m * n or len(np.unique(ranking.order)) != m * n:
        raise ParameterError("ranking must cover every pixel exactly once")
    if r < 1:
        raise ParameterError(f"r must be >= 1, got {r}")
    if not 0 <= target < clf.K:
        raise ParameterError(f"class {target} outside [0, {clf.K})")

    steps = ceil(m * n / r)
    flat_x = img.reshape(m * n, 3)
    flat_a = baseline.image.reshape(m * n, 3)
    work = flat_x.copy()
    scores = np.empty(steps + 1)
    pending: list[np.ndarray] = [img.copy()]
    pending_at = [0]

    def flush():
        probs = clf.predict_batch(np.stack(pending))
        scores[pending_at] = probs[:, target]
        pending.clear()
        pending_at.clear()

    for k in range(1, steps + 1):
        sel = ranking.order[(k - 1) * r : k * r]
        work[sel] = flat_a[sel]
        pending.append(work.reshape(m, n, 3).copy())
        pending_at.append(k)
        if len(pending) >= _PRED_BATCH:
            flush()
    if pending:
        flush()

    alphas = np.minimum(np.arange(steps + 1) * (r / (m * n)), 1.0)
    alphas[-1] = 1.0
    metric = MORF if ranking.direction == MOST_RELEVANT_FIRST else LERF
    return PerturbationCurve(alphas, scores, r, metric, baseline.tag, target)


def auc(curve: PerturbationCurve, rule: str = "mean") -> MetricScore:
    """Area under the curve on the occluded-fraction axis.

    The default rule is the mean of the sampled scores (a rectangle rule
    on the uniform alpha grid); ``rule="trapezoid"`` integrates the
    polyline over alpha instead, which differs by O(1/L).
    """
    if rule == "mean":
        value = float(np.mean(curve.scores))
    elif rule == "trapezoid":
        value = float(np.trapz(curve.scores, curve.alphas))
    else:
        raise ParameterError(f"unknown integration rule {rule!r}")
    return MetricScore("auc", value)


def aoc(curve: PerturbationCurve, rule: str = "mean") -> MetricScore:
    """Area over the curve relative to the intact-input score: s_0 - AUC."""
    return MetricScore("aoc", curve.s0 - auc(curve, rule).value)


def curve_score(curve: PerturbationCurve, rule: str = "mean") -> MetricScore:
    """The canonical score for a curve: AOC for MoRF, AUC for LeRF."""
    return aoc(curve, rule) if curve.metric == MORF else auc(curve, rule)


@dataclass(frozen=True)
class CellComparison:
    """One (baseline, metric) cell of a head-to-head comparison."""

    baseline_tag: str
    metric: str
    curve1: PerturbationCurve
    curve2: PerturbationCurve
    score1: MetricScore
    score2: MetricScore
    winner: str  # "map1" | "map2" | "tie"


@dataclass(frozen=True)
class ComparisonMatrix:
    cells: list[CellComparison]
    target: int

    def winner(self, baseline_tag: str, metric: str) -> str:
        for c in self.cells:
            if c.baseline_tag == baseline_tag and c.metric == metric:
                return c.winner
        raise KeyError((baseline_tag, metric))


def compare_saliency(
    x,
    s1: SaliencyMap,
    s2: SaliencyMap,
    baselines: list[BaselineImage],
    metrics,
    clf: Classifier,
    target: int,
    r: int = 1,
) -> ComparisonMatrix:
    """Score two maps under every (baseline, metric) combination.

    Emits the full matrix so that baseline-dependent inversions of the
    verdict are visible rather than averaged away.  Scores within 1e-9
    count as a tie.
    """
    img = as_image(x)
    if s1.shape != img.shape[:2] or s2.shape != img.shape[:2]:
        raise DimensionError("saliency maps must match the image size")
    metrics = list(metrics)
    for metric in metrics:
        if metric not in (MORF, LERF):
            raise ParameterError(f"unknown metric {metric!r}")
    cells = []
    for base in baselines:
        for metric in metrics:
            direction = MOST_RELEVANT_FIRST if metric == MORF else LEAST_RELEVANT_FIRST
            c1 = perturbation_curve(img, base, rank_pixels(s1, direction), clf, target, r)
            c2 = perturbation_curve(img, base, rank_pixels(s2, direction), clf, target, r)
            v1, v2 = curve_score(c1), curve_score(c2)
            if abs(v1.value - v2.value) <= TIE_EPS:
                winner = "tie"
            else:
                winner = "map1" if v1.value > v2.value else "map2"
            cells.append(CellComparison(base.tag, metric, c1, c2, v1, v2, winner))
    return ComparisonMatrix(cells, target)
