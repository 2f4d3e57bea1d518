"""spectralforge: preprocessing, augmentation, and CNN regression for small
spectral datasets, with a reproducible cross-validation harness."""

from .augment import AugmentConfig, augment
from .core import (
    DatasetError,
    FoldSplit,
    SpectralMatrix,
    TargetMatrix,
    WavenumberAxis,
    load_dataset,
    split_folds,
    write_dataset,
)
from .evaluate import (
    AblationTable,
    CVResult,
    FoldScore,
    ablate_factor,
    ablate_kernel,
    ablate_order,
    grid_search_pipelines,
    run_cv,
    run_cv_per_target,
)
from .preprocess import (
    Derivative,
    FittedScaler,
    GlobalScale,
    LinearBaseline,
    Pipeline,
    SNV,
    apply_pipeline,
    apply_scaler,
    build_design_matrix,
    design_matrix_to_csv,
    fit_global_scaler,
    linear_baseline,
    parse_pipeline,
    savgol_derivative,
    snv,
)
from .stats import ComparisonResult, mann_whitney_u, overall_score, r2, rmse
from .synth import SynthConfig, generate, inject_artefacts
from .train import (
    EarlyStopper,
    TargetScaler,
    TrainConfig,
    TrainReport,
    heuristic_lr,
    inner_split,
    predict,
    train_model,
)

__version__ = "0.1.0"
