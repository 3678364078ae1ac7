"""Command-line entry point.

Subcommands: ``rise``, ``converge``, ``morf``, ``lerf``, ``compare``,
``neutral-sweep``, ``corpus``, ``toy-gen``.  Options can come from a
TOML config file (``--config``), with command-line flags taking
precedence; the seed falls back to the ``PERTURBEVAL_SEED`` environment
variable.  Every output is stamped with a digest of the effective
configuration, and a rerun with the same configuration byte-reproduces
every artifact.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import BaselineSpec, realize_baseline
from .classifiers import (
    OnnxClassifier,
    SubprocessClassifier,
    argmax_class,
    brightness_toy_classifier,
    load_toy_classifier,
    neutral_input_sweep,
    random_toy_classifier,
    save_toy_classifier,
    uniform_toy_classifier,
)
from .core import (
    Preprocessor,
    load_saliency,
    read_image_png,
    resize_image,
    save_saliency_npy,
    write_image_png,
)
from .errors import BackendError, ParameterError, PerturbEvalError
from .metrics import (
    LEAST_RELEVANT_FIRST,
    LERF,
    MORF,
    MOST_RELEVANT_FIRST,
    compare_saliency,
    curve_score,
    perturbation_curve,
    rank_pixels,
)
from .report import ConvergenceSummary, export_curve, render_heatmap
from .rise import ConvergenceReport, RiseConfig, convergence_check, generate_rise, threshold_from_histogram

__all__ = ["RunConfig", "run_command", "main"]

USAGE_EXIT = 2
BACKEND_EXIT = 3


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one invocation; fully serializable."""

    classifier: str | None = None
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_masks: int = 16384
    w: int = 7
    h: int | None = None
    p: float = 0.5
    normalization: str = "scalar"
    snapshot_interval: int = 128
    baselines: tuple[str, ...] = ("inv",)
    metrics: tuple[str, ...] = (MORF, LERF)
    r: int = 1
    d_max: float | None = None
    seed: int = 0
    out: str = "perturbeval-out"
    corpus: str | None = None
    jobs: int | None = None
    target: int | None = None
    bins: int = 20

    def digest(self) -> str:
        payload = asdict(self)
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def grid_h(self) -> int:
        return self.h if self.h is not None else self.w


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def _load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file, flags, and environment into one RunConfig."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "seed" not in values and os.environ.get("PERTURBEVAL_SEED"):
        values["seed"] = int(os.environ["PERTURBEVAL_SEED"])
    for key in ("mean", "scale", "baselines", "metrics"):
        if key in values:
            values[key] = tuple(values[key])
    if "target" in values and isinstance(values["target"], str):
        values["target"] = None if values["target"] == "auto" else int(values["target"])
    return RunConfig(**values)


def _build_classifier(cfg: RunConfig):
    if not cfg.classifier:
        raise ParameterError("no classifier configured; pass --classifier toy:/onnx:/cmd:")
    g = Preprocessor(cfg.mean, cfg.scale)
    kind, _, rest = cfg.classifier.partition(":")
    if not rest:
        raise ParameterError(f"classifier spec {cfg.classifier!r} must look like kind:value")
    if kind == "toy":
        return load_toy_classifier(rest)
    if kind == "onnx":
        return OnnxClassifier(rest, g)
    if kind == "cmd":
        return SubprocessClassifier(rest, g)
    raise ParameterError(f"unknown classifier kind {kind!r} (expected toy/onnx/cmd)")


def _load_input(path, clf) -> np.ndarray:
    img = read_image_png(path)
    if img.shape[:2] != clf.expected_input:
        img = resize_image(img, *clf.expected_input)
    return img


def _rise_config(cfg: RunConfig, tag: str, fixed_crop: bool = False) -> RiseConfig:
    return RiseConfig(
        n_masks=cfg.n_masks,
        w=cfg.w,
        h=cfg.grid_h,
        p=cfg.p,
        seed=cfg.seed,
        baseline=BaselineSpec.parse_tag(tag),
        target=cfg.target,
        normalization=cfg.normalization,
        snapshot_interval=cfg.snapshot_interval,
        fixed_crop=fixed_crop,
    )


def _write_json(path: Path, payload: dict) -> None:
    path.write_bytes((json.dumps(payload, sort_keys=True, indent=1) + "\n").encode())


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_rise(cfg: RunConfig, args) -> list[Path]:
    clf = _build_classifier(cfg)
    out = _out_dir(cfg)
    img = _load_input(args.image, clf)
    stem = Path(args.image).stem
    written = []
    for tag in cfg.baselines:
        result = generate_rise(img, _rise_config(cfg, tag), clf)
        base = out / f"{stem}.rise.{tag}"
        save_saliency_npy(f"{base}.npy", result.saliency)
        write_image_png(f"{base}.png", render_heatmap(result.saliency))
        _write_json(
            Path(f"{base}.json"),
            {
                "artifact": "rise",
                "config_digest": cfg.digest(),
                "rise_digest": result.config.digest(),
                "seed": cfg.seed,
                "target": result.config.target,
                "baseline": tag,
                "snapshot_indices": [k for k, _ in result.snapshots],
                "files": {"saliency": f"{base.name}.npy", "heatmap": f"{base.name}.png"},
            },
        )
        written += [Path(f"{base}{ext}") for ext in (".npy", ".png", ".json")]
    return written


def _converge_one(cfg: RunConfig, clf, image_path) -> tuple[ConvergenceReport, list[Path]]:
    if cfg.d_max is None:
        raise ParameterError("converge requires an explicit --d-max (no silent default)")
    out = _out_dir(cfg)
    img = _load_input(image_path, clf)
    stem = Path(image_path).stem
    tag = cfg.baselines[0]
    report = convergence_check(img, _rise_config(cfg, tag), clf, d_max=cfg.d_max)
    written = []
    run_files = []
    for i, run in enumerate(report.runs):
        f = out / f"{stem}.converge.{tag}.run{i}.npy"
        save_saliency_npy(f, run.saliency)
        run_files.append(f.name)
        written.append(f)
    report_path = out / f"{stem}.converge.{tag}.json"
    _write_json(
        report_path,
        {
            "artifact": "converge",
            "config_digest": cfg.digest(),
            "baseline": tag,
            "seed": cfg.seed,
            "target": report.runs[0].config.target,
            "d_max": report.d_max,
            "d_bar": report.d_bar,
            "converged": report.converged,
            "traces": {f"{i}-{j}": pts for (i, j), pts in report.traces.items()},
            "runs": run_files,
        },
    )
    written.append(report_path)
    return report, written


def _cmd_converge(cfg: RunConfig, args) -> list[Path]:
    clf = _build_classifier(cfg)
    _, written = _converge_one(cfg, clf, args.image)
    return written


def _cmd_curves(cfg: RunConfig, args, metrics: tuple[str, ...]) -> list[Path]:
    if not args.saliency:
        raise ParameterError("pass at least one --saliency map")
    clf = _build_classifier(cfg)
    out = _out_dir(cfg)
    img = _load_input(args.image, clf)
    stem = Path(args.image).stem
    maps = [load_saliency(p) for p in args.saliency]
    map_names = [Path(p).stem for p in args.saliency]
    baselines = [realize_baseline(BaselineSpec.parse_tag(t), img, clf.preprocessor) for t in cfg.baselines]
    target = cfg.target if cfg.target is not None else argmax_class(clf, img)

    written = []
    if len(maps) == 1:
        scores = {}
        for base in baselines:
            scores[base.tag] = {}
            for metric in metrics:
                direction = MOST_RELEVANT_FIRST if metric == MORF else LEAST_RELEVANT_FIRST
                curve = perturbation_curve(img, base, rank_pixels(maps[0], direction), clf, target, cfg.r)
                p = out / f"{stem}.{map_names[0]}.{base.tag}.{metric}.csv"
                p.write_bytes(export_curve(curve, "csv"))
                written.append(p)
                score = curve_score(curve)
                scores[base.tag][metric] = {"kind": score.kind, "value": score.value}
        p = out / f"{stem}.{map_names[0]}.scores.json"
        _write_json(p, {"artifact": "scores", "config_digest": cfg.digest(), "target": target,
                        "map": map_names[0], "r": cfg.r, "matrix": scores})
        written.append(p)
        return written

    if len(maps) != 2:
        raise ParameterError("comparison takes exactly two --saliency maps")
    matrix = compare_saliency(img, maps[0], maps[1], baselines, metrics, clf, target, cfg.r)
    payload: dict = {}
    for cell in matrix.cells:
        for name, curve in ((map_names[0], cell.curve1), (map_names[1], cell.curve2)):
            p = out / f"{stem}.{name}.{cell.baseline_tag}.{cell.metric}.csv"
            p.write_bytes(export_curve(curve, "csv"))
            written.append(p)
        payload.setdefault(cell.baseline_tag, {})[cell.metric] = {
            "kind": cell.score1.kind,
            "score1": cell.score1.value,
            "score2": cell.score2.value,
            "winner": cell.winner,
        }
    p = out / f"{stem}.compare.json"
    _write_json(p, {"artifact": "compare", "config_digest": cfg.digest(), "target": target,
                    "maps": map_names, "r": cfg.r, "matrix": payload})
    written.append(p)
    return written


def _parse_levels(text: str) -> list[int]:
    levels: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            levels.update(range(int(lo), int(hi) + 1))
        elif part:
            levels.add(int(part))
    if not levels:
        raise ParameterError(f"no levels parsed from {text!r}")
    return sorted(levels)


def _cmd_neutral_sweep(cfg: RunConfig, args) -> list[Path]:
    clf = _build_classifier(cfg)
    out = _out_dir(cfg)
    rows = neutral_input_sweep(clf, _parse_levels(args.levels))
    lines = ["gamma,argmax_class,max_prob"]
    lines += [f"{r.gamma},{r.argmax},{r.max_prob:.17g}" for r in rows]
    p = out / "neutral_sweep.csv"
    p.write_bytes(("\n".join(lines) + "\n").encode())
    return [p]


def _corpus_worker(cfg_values: dict, image_path: str) -> tuple[str, float, bool]:
    cfg = RunConfig(**cfg_values)
    clf = _build_classifier(cfg)
    report, _ = _converge_one(cfg, clf, image_path)
    return Path(image_path).stem, report.d_bar, report.converged


def _cmd_corpus(cfg: RunConfig, args) -> list[Path]:
    if not cfg.corpus:
        raise ParameterError("corpus requires --corpus <glob>")
    paths = sorted(glob.glob(cfg.corpus))
    if not paths:
        raise ParameterError(f"corpus glob {cfg.corpus!r} matched no files")
    out = _out_dir(cfg)
    jobs = cfg.jobs or os.cpu_count() or 1
    cfg_values = asdict(cfg)
    if jobs == 1:
        results = [_corpus_worker(cfg_values, p) for p in paths]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_corpus_worker, [cfg_values] * len(paths), paths))
    results.sort(key=lambda row: row[0])
    summary = ConvergenceSummary(
        total=len(results),
        converged=sum(1 for _, _, c in results if c),
        d_bars=[d for _, d, _ in results],
    )
    counts, edges = np.histogram(summary.d_bars, bins=cfg.bins)
    p = out / "corpus_summary.json"
    _write_json(
        p,
        {
            "artifact": "corpus",
            "config_digest": cfg.digest(),
            "total": summary.total,
            "converged": summary.converged,
            "fraction": summary.fraction,
            "d_bars": {stem: d for stem, d, _ in results},
            "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
            "suggested_d_max": threshold_from_histogram(summary.d_bars, cfg.bins),
        },
    )
    return [p]


def _cmd_toy_gen(cfg: RunConfig, args) -> list[Path]:
    g = Preprocessor(cfg.mean, cfg.scale)
    m, n, k = args.height, args.width, args.classes
    if args.kind == "uniform":
        clf = uniform_toy_classifier(k, m, n, g)
    elif args.kind == "brightness":
        clf = brightness_toy_classifier(m, n, g, gain=args.gain)
    elif args.kind == "random":
        clf = random_toy_classifier(k, m, n, cfg.seed, g)
    else:
        raise ParameterError(f"unknown toy kind {args.kind!r}")
    path = Path(args.out_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_toy_classifier(path, clf)
    return [path]


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML config file; flags override its values")
    sub.add_argument("--classifier", help="toy:<npz> | onnx:<model> | cmd:<command>")
    sub.add_argument("--mean", type=_triple, help="preprocessor per-channel mean, e.g. 104,117,124")
    sub.add_argument("--scale", type=_triple, help="preprocessor per-channel scale")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--target", help="class index or 'auto'")


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 1 or 3 comma-separated values, got {text!r}")
    return tuple(parts)


def _add_rise_params(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n", dest="n_masks", type=int, help="number of masks")
    sub.add_argument("--w", type=int, help="mask cells per row")
    sub.add_argument("--h", type=int, help="mask cells per column (default: w)")
    sub.add_argument("--p", type=float, help="cell on-probability")
    sub.add_argument("--normalization", choices=["scalar", "empirical"])
    sub.add_argument("--snapshot-interval", dest="snapshot_interval", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perturbeval",
        description="Perturbation-based saliency maps and occlusion metrics for black-box classifiers",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("rise", help="generate a saliency map per baseline")
    _add_common(s)
    _add_rise_params(s)
    s.add_argument("--image", required=True)
    s.add_argument("--baseline", dest="baselines", action="append", help="baseline tag (repeatable)")
    s.set_defaults(func=_cmd_rise)

    s = subs.add_parser("converge", help="three-run convergence diagnostic")
    _add_common(s)
    _add_rise_params(s)
    s.add_argument("--image", required=True)
    s.add_argument("--baseline", dest="baselines", action="append")
    s.add_argument("--d-max", dest="d_max", type=float, help="convergence threshold (required)")
    s.set_defaults(func=_cmd_converge)

    for name, metric_set in (("morf", (MORF,)), ("lerf", (LERF,)), ("compare", (MORF, LERF))):
        s = subs.add_parser(name, help=f"run {name} occlusion curves")
        _add_common(s)
        s.add_argument("--image", required=True)
        s.add_argument("--saliency", action="append", help="saliency map file (.npy or image); repeatable")
        s.add_argument("--baseline", dest="baselines", action="append")
        s.add_argument("--r", type=int, help="pixels replaced per step")
        s.set_defaults(func=lambda cfg, args, ms=metric_set: _cmd_curves(cfg, args, ms))

    s = subs.add_parser("neutral-sweep", help="predictions for constant gray inputs")
    _add_common(s)
    s.add_argument("--levels", default="0..255", help="e.g. 0..255 or 0,127,255")
    s.set_defaults(func=_cmd_neutral_sweep)

    s = subs.add_parser("corpus", help="convergence statistics over an image directory")
    _add_common(s)
    _add_rise_params(s)
    s.add_argument("--corpus", help="glob of input images")
    s.add_argument("--baseline", dest="baselines", action="append")
    s.add_argument("--d-max", dest="d_max", type=float)
    s.add_argument("--jobs", type=int, help="concurrent images (default: cpu count)")
    s.add_argument("--bins", type=int, help="histogram bin count for the d-bar summary")
    s.set_defaults(func=_cmd_corpus)

    s = subs.add_parser("toy-gen", help="write a toy classifier weights file")
    _add_common(s)
    s.add_argument("--out-file", required=True, help="destination .npz")
    s.add_argument("--height", type=int, default=16)
    s.add_argument("--width", type=int, default=16)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--kind", choices=["uniform", "brightness", "random"], default="random")
    s.add_argument("--gain", type=float, default=1.0)
    s.set_defaults(func=_cmd_toy_gen)

    return parser


def run_command(argv) -> int:
    """Execute a subcommand; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(args)
        written = args.func(cfg, args)
    except BackendError as exc:
        print(json.dumps({"error": str(exc), "kind": "backend"}), file=sys.stderr)
        return BACKEND_EXIT
    except PerturbEvalError as exc:
        print(json.dumps({"error": str(exc), "kind": type(exc).__name__}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": str(exc), "kind": "missing-file"}), file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
