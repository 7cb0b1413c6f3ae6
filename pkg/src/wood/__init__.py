"""Wasserstein-distance out-of-distribution detection.

Transport distances between softmax outputs and class one-hots drive an OOD
score, a mixed-batch training loss with explicit gradients, threshold
calibration, and FNR/AUROC evaluation. See the README for the CLI.
"""

from .data import Dataset, Role, SyntheticKind, SyntheticSpec, load_idx_pair, split, synth
from .detect import (
    Detector,
    EvalReport,
    auroc_rank,
    calibrate,
    classify,
    evaluate,
    evaluate_with_detector,
    histogram_csv_lines,
    max_softmax_score,
    report_text,
)
from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    FormatError,
    InputError,
    NumericError,
    WoodError,
)
from .geometry import (
    EvalPath,
    ScoreConfig,
    binary_matrix,
    dynamic_matrix,
    score_argmin_class,
    wasserstein_to_onehot,
    wood_score,
)
from .loss import (
    BatchSlices,
    BoundDiagnostics,
    LossValue,
    bound_diagnostics,
    grad_ind,
    grad_ood,
    wood_loss,
)
from .model import Activation, ForwardTrace, MlpModel, backward, forward, init, predict_probs
from .trainer import (
    Checkpoint,
    TrainConfig,
    fit,
    load_checkpoint,
    make_batches,
    save_checkpoint,
    train_step,
)
from .transport import (
    CostKind,
    CostMatrix,
    SinkhornConfig,
    TransportResult,
    as_prob_vector,
    center_gradient,
    exact_wasserstein,
    metric_axioms_check,
    one_hot,
    sinkhorn_distance,
    sinkhorn_gradient,
)

__version__ = "0.1.0"
