"""Rendering, export, and corpus summaries.

Heatmaps normalize a saliency map to [0, 1], quantize to 256 levels and
map through the embedded inferno table (lighter colors mean higher
importance).  Curve and summary exports are byte-stable: identical
inputs always produce identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._inferno import INFERNO_RGB8
from .core import SaliencyMap, normalize_saliency
from .errors import DataError, ParameterError
from .metrics import PerturbationCurve
from .rise import ConvergenceReport

__all__ = [
    "render_heatmap",
    "export_curve",
    "import_curve_json",
    "ConvergenceSummary",
    "corpus_convergence_summary",
]


def render_heatmap(s: SaliencyMap) -> np.ndarray:
    """Render a saliency map as an (m, n, 3) uint8 inferno heatmap.

    Values are min-max normalized, quantized with round-half-up to
    0..255, and looked up in the embedded table; every output pixel is
    one of the 256 table entries.
    """
    v = normalize_saliency(s).values
    idx = np.clip(np.floor(v * 255.0 + 0.5), 0, 255).astype(np.int64)
    return INFERNO_RGB8[idx]


def export_curve(curve: PerturbationCurve, format: str = "csv") -> bytes:
    """Serialize a perturbation curve to CSV or JSON bytes.

    CSV has an ``alpha,score`` header and 17-significant-digit decimals,
    enough to reproduce each float64 exactly.  JSON carries the metric,
    baseline tag, target class, and step size alongside the points and
    round-trips through :func:`import_curve_json` without loss.
    """
    if format == "csv":
        lines = ["alpha,score"]
        lines += [f"{a:.17g},{s:.17g}" for a, s in zip(curve.alphas, curve.scores)]
        return ("\n".join(lines) + "\n").encode()
    if format == "json":
        payload = {
            "metric": curve.metric,
            "baseline": curve.baseline_tag,
            "target": curve.target,
            "r": curve.r,
            "alphas": curve.alphas.tolist(),
            "scores": curve.scores.tolist(),
        }
        return (json.dumps(payload, sort_keys=True, indent=1) + "\n").encode()
    raise ParameterError(f"unknown export format {format!r}")


def import_curve_json(blob: bytes) -> PerturbationCurve:
    """Rebuild a curve exported with ``export_curve(..., "json")``."""
    try:
        payload = json.loads(blob)
        return PerturbationCurve(
            alphas=np.asarray(payload["alphas"], dtype=np.float64),
            scores=np.asarray(payload["scores"], dtype=np.float64),
            r=int(payload["r"]),
            metric=payload["metric"],
            baseline_tag=payload["baseline"],
            target=int(payload["target"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"not a curve export: {exc}") from exc


@dataclass(frozen=True)
class ConvergenceSummary:
    """Corpus-level convergence statistics.

    ``d_bars`` is the list of per-input mean final distances, ready to
    feed a histogram-based threshold selection.
    """

    total: int
    converged: int
    d_bars: list[float]

    @property
    def fraction(self) -> float:
        return self.converged / self.total


def corpus_convergence_summary(reports: list[ConvergenceReport]) -> ConvergenceSummary:
    """Aggregate convergence reports over a corpus of inputs."""
    if not reports:
        raise ParameterError("reports must be nonempty")
    return ConvergenceSummary(
        total=len(reports),
        converged=sum(1 for r in reports if r.converged),
        d_bars=[r.d_bar for r in reports],
    )
