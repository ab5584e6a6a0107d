"""Region-based active learning for weakly-supervised binary segmentation.

The library covers the full loop: a from-scratch convolutional pixel
classifier with MC-dropout uncertainty, entropy-ranked region acquisition,
point-level and per-pixel labeling with a second-accurate cost model, a
simulated oracle for reproducible experiments, and an HTTP annotation
service for real human-in-the-loop sessions.
"""

from .acquisition import (
    Aggregation,
    Heuristic,
    RegionScore,
    SelectionRequest,
    rank_images,
    score_regions,
    select,
)
from .contours import polygon_vertex_count, simplify_closed, trace_boundary
from .data_model import (
    DatasetSplit,
    GroundTruthMask,
    ImageSlice,
    PartialLabelMask,
    RegionGrid,
    RegionRef,
    RegionState,
    SplitMode,
    build_grid,
    make_split,
    region_bounds,
    region_slices,
)
from .evaluation import (
    ConfusionCounts,
    CurvePoint,
    UndefinedMetricError,
    auc_trapezoid,
    confusion,
    curve_to_csv,
    dice,
    specificity,
)
from .ingestion import (
    DatasetLoadError,
    DatasetManifest,
    PreprocessingSpec,
    SyntheticConfig,
    bilinear_resize,
    generate_synthetic,
    load_manifest,
    preprocess_slice,
    resize_mask,
    save_dataset,
)
from .oracle_cost import (
    ActionKind,
    AnnotationAction,
    BudgetLedger,
    CostModel,
    InvalidStateError,
    annotate_full,
    annotate_point,
    ledger_total,
    scenario_cost,
)
from .orchestrator import (
    ConfigurationError,
    RunConfig,
    RunResult,
    desk_preset,
    experiment_heuristics,
    experiment_region_size,
    experiment_supervision,
    replay,
    run,
)
from .predictor import (
    Adam,
    NumericError,
    PredictorParams,
    TrainConfig,
    forward,
    forward_mc,
    full_sup_loss,
    init_params,
    load_checkpoint,
    point_loss,
    predict_binary,
    save_checkpoint,
    train_cycle,
)
from .uncertainty import EntropyMap, entropy_map, entropy_png_bytes, mc_samples, mean_estimator

__version__ = "0.1.0"
