"""Machine-centric image quality benchmark kit.

Builds region-weighted degraded image grids, turns black-box vision-model
predictions into ensemble quality labels (consistency, accuracy, and
their convex composite), validates label stability across model subsets,
and evaluates external quality predictors against those labels with a
logistic-remap correlation protocol.
"""

__version__ = "0.1.0"

from .agreement import (
    MatchConfig,
    MatchResult,
    agreement,
    average_precision,
    box_iou,
    classification_agreement,
    greedy_match,
    map_score,
    mask_iou,
)
from .core import (
    BG_DOMINATED_CELLS,
    DISTORTION_TYPES,
    FULL_GRID_CELLS,
    ROI_DOMINATED_CELLS,
    UNIFORM_CELLS,
    BoxItem,
    ClassPrediction,
    DatasetManifest,
    DetectionSet,
    DistortionSpec,
    ImageEntry,
    InstanceSet,
    MaskItem,
    ModelRecord,
    PredictionRecord,
    QualityLabel,
    TaskKind,
    ValidationError,
    normalize_weights,
)
from .degradation import apply_distortion, composite_regions, generate_grid
from .evaluation import (
    EvalReport,
    LogisticParams,
    evaluate,
    fit_logistic,
    krcc,
    logistic_eval,
    plcc,
    rmse,
    srcc,
)
from .fidelity import FidelityScore, fidelity, psnr, ssim
from .labeling import (
    ScoreTensor,
    StabilityReport,
    build_score_tensor,
    mmos,
    score_labels,
    validate_labels,
)
from .rle import RunLengthMask, rle_decode, rle_encode
from .synthetic import SynthModel, effective_severity, synth_predict
