"""Perturbation-based saliency toolkit for black-box image classifiers.

Generates RISE-style saliency maps with arbitrary baseline images,
diagnoses their convergence across independent runs, and evaluates any
saliency map with the MoRF/LeRF occlusion metrics.
"""

from .baselines import (
    BaselineImage,
    BaselineSpec,
    baseline_set,
    blur_baseline,
    constant_baseline,
    gaussian_blur,
    inv_preproc_baseline,
    realize_baseline,
)
from .classifiers import (
    Classifier,
    OnnxClassifier,
    SubprocessClassifier,
    ToyLinearClassifier,
    argmax_class,
    brightness_toy_classifier,
    class_probability,
    load_toy_classifier,
    make_toy_linear_classifier,
    neutral_input_sweep,
    random_toy_classifier,
    save_toy_classifier,
    uniform_toy_classifier,
)
from .core import (
    Preprocessor,
    SaliencyMap,
    as_image,
    inverse_preprocess,
    load_saliency,
    normalize_saliency,
    preprocess,
    read_image_png,
    resize_image,
    saliency_l2_distance,
    save_saliency_npy,
    write_image_png,
)
from .errors import (
    BackendError,
    DataError,
    DimensionError,
    ParameterError,
    PerturbEvalError,
    SizeError,
)
from .masking import (
    MaskBatch,
    MaskParams,
    apply_baseline,
    enumerate_all_masks,
    load_mask_batch,
    regenerate_mask,
    sample_low_res_masks,
    save_mask_batch,
    upsample_and_crop,
    upsample_batch,
)
from .metrics import (
    LEAST_RELEVANT_FIRST,
    LERF,
    MORF,
    MOST_RELEVANT_FIRST,
    ComparisonMatrix,
    MetricScore,
    PerturbationCurve,
    PixelRanking,
    aoc,
    auc,
    compare_saliency,
    curve_score,
    perturbation_curve,
    rank_pixels,
)
from .report import (
    ConvergenceSummary,
    corpus_convergence_summary,
    export_curve,
    import_curve_json,
    render_heatmap,
)
from .rise import (
    ConvergenceReport,
    RiseConfig,
    RiseResult,
    convergence_check,
    generate_rise,
    generate_rise_exact,
    threshold_from_histogram,
)

__version__ = "0.1.0"
