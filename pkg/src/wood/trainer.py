"""Mixed-batch training loop, metrics logging, and checkpoint persistence.

Each step draws a batch of labeled InD samples (shuffled without
replacement per epoch) plus a smaller batch of unlabeled OOD samples
(uniform with replacement), evaluates the combined loss, backpropagates the
explicit softmax-output gradients, and applies one SGD-with-momentum
update. Everything is deterministic given (seed, data, config) in
single-threaded mode.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigError, FormatError, NumericError
from .geometry import ScoreConfig
from .loss import (
    BatchSlices,
    BoundDiagnostics,
    LossValue,
    bound_diagnostics,
    grad_ind,
    grad_ood,
    observed_max_cost,
    wood_loss,
)
from .model import Activation, MlpModel, ParamGrads, backward, forward, init

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    beta: float = 0.1
    b_ind: int = 50
    b_ood: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    score: ScoreConfig = field(default_factory=ScoreConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.b_ind < 1:
            raise ConfigError(f"b_ind must be >= 1, got {self.b_ind}")
        if self.b_ood < 0:
            raise ConfigError(f"b_ood must be >= 0, got {self.b_ood}")
        # lr == 0 is allowed as a diagnostic no-op update.
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")


@dataclass
class Batch:
    """One mixed batch; OOD samples are identified structurally, no labels."""

    x_ind: np.ndarray
    y_ind: np.ndarray
    x_ood: np.ndarray


def make_batches(ind_set: Dataset, ood_set: Dataset | None, cfg: TrainConfig, epoch_rng):
    """Yield one epoch of mixed batches.

    InD indices are a fresh permutation chunked by ``b_ind`` (the final
    chunk may be short); OOD indices are drawn uniformly with replacement
    per batch. RNG call order (permutation first, then one draw per batch)
    is part of the determinism contract.
    """
    if ind_set.n == 0:
        raise ConfigError("InD dataset is empty")
    if cfg.b_ood > 0 and (ood_set is None or ood_set.n == 0):
        raise ConfigError("b_ood > 0 requires a non-empty OOD dataset")
    perm = epoch_rng.permutation(ind_set.n)
    for start in range(0, ind_set.n, cfg.b_ind):
        idx = perm[start : start + cfg.b_ind]
        if cfg.b_ood > 0:
            ood_idx = epoch_rng.integers(0, ood_set.n, size=cfg.b_ood)
            x_ood = ood_set.features[ood_idx]
        else:
            x_ood = np.zeros((0, ind_set.dim))
        yield Batch(
            x_ind=ind_set.features[idx],
            y_ind=ind_set.labels[idx],
            x_ood=x_ood,
        )


class MomentumState:
    """Per-parameter velocity buffers for SGD with momentum."""

    def __init__(self, model: MlpModel):
        self.weights = [np.zeros_like(w) for w in model.weights]
        self.biases = [np.zeros_like(b) for b in model.biases]


def _check_finite(grads: ParamGrads, grad_probs: np.ndarray, cfg: TrainConfig, batch_id) -> None:
    if all(np.all(np.isfinite(g)) for g in grads.weights) and all(
        np.all(np.isfinite(g)) for g in grads.biases
    ):
        return
    bad_rows = np.flatnonzero(~np.all(np.isfinite(grad_probs), axis=1))
    sample = int(bad_rows[0]) if bad_rows.size else -1
    raise NumericError(
        "non-finite gradient encountered"
        f" (lam={cfg.score.sinkhorn.lam}, batch={batch_id}, sample={sample})"
    )


def train_step(
    model: MlpModel,
    batch: Batch,
    cfg: TrainConfig,
    state: MomentumState,
    batch_id=None,
) -> tuple[LossValue, BoundDiagnostics]:
    """One forward/backward/update cycle; returns the pre-update loss.

    The model is updated in place. Per-sample output gradients are
    accumulated left-to-right in batch order.
    """
    n_ind = batch.x_ind.shape[0]
    n_ood = batch.x_ood.shape[0]
    if n_ood:
        x = np.vstack([batch.x_ind, batch.x_ood])
    else:
        x = batch.x_ind
    trace = forward(model, x)
    probs = trace.probs

    slices = BatchSlices(
        ind_probs=[(probs[i], int(batch.y_ind[i])) for i in range(n_ind)],
        ood_probs=[probs[n_ind + j] for j in range(n_ood)],
        beta=cfg.beta,
    )
    loss_value = wood_loss(slices, cfg.score)
    diagnostics = bound_diagnostics(slices, observed_max_cost(slices, cfg.score))

    grad_probs = np.zeros_like(probs)
    for i in range(n_ind):
        grad_probs[i] = grad_ind(probs[i], int(batch.y_ind[i]), n_ind)
    for j in range(n_ood):
        grad_probs[n_ind + j] = grad_ood(probs[n_ind + j], cfg.score, n_ood, cfg.beta)

    grads = backward(model, trace, grad_probs)
    _check_finite(grads, grad_probs, cfg, batch_id)

    for w, b, gw, gb, vw, vb in zip(
        model.weights, model.biases, grads.weights, grads.biases, state.weights, state.biases
    ):
        vw *= cfg.momentum
        vw += gw
        vb *= cfg.momentum
        vb += gb
        w -= cfg.lr * vw
        b -= cfg.lr * vb
    return loss_value, diagnostics


@dataclass
class EpochMetrics:
    epoch: int
    ce_term: float
    ood_term: float
    total: float
    alpha_m: float
    m: float
    wall_ms: float


METRICS_COLUMNS = ("epoch", "ce_term", "ood_term", "total", "alpha_M", "m", "wall_ms")


def metrics_csv_lines(metrics: list[EpochMetrics]) -> list[str]:
    """Render the per-epoch log as CSV lines (repr floats, exact reload)."""
    lines = [",".join(METRICS_COLUMNS)]
    for row in metrics:
        lines.append(
            ",".join(
                [
                    str(row.epoch),
                    repr(row.ce_term),
                    repr(row.ood_term),
                    repr(row.total),
                    repr(row.alpha_m),
                    repr(row.m),
                    repr(row.wall_ms),
                ]
            )
        )
    return lines


def _score_config_dict(score: ScoreConfig) -> dict:
    return {
        "matrix_kind": score.matrix_kind.value,
        "evaluation": score.evaluation.value,
        "sinkhorn": asdict(score.sinkhorn),
    }


def _train_config_dict(cfg: TrainConfig) -> dict:
    return {
        "epochs": cfg.epochs,
        "beta": cfg.beta,
        "b_ind": cfg.b_ind,
        "b_ood": cfg.b_ood,
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "seed": cfg.seed,
        "score": _score_config_dict(cfg.score),
    }


@dataclass
class Checkpoint:
    """Serializable model snapshot; round-trips bit-exactly through JSON."""

    format_version: int
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str
    normalization: dict
    n_classes: int
    train_config: dict
    rng_digest: str


def checkpoint_from_model(
    model: MlpModel, normalization: dict, cfg: TrainConfig, rng_digest: str
) -> Checkpoint:
    return Checkpoint(
        format_version=CHECKPOINT_VERSION,
        layer_dims=model.layer_dims,
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
        activation=model.activation.value,
        normalization=dict(normalization),
        n_classes=model.n_classes,
        train_config=_train_config_dict(cfg),
        rng_digest=rng_digest,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> MlpModel:
    return MlpModel(
        layer_dims=tuple(ckpt.layer_dims),
        weights=[np.array(w, dtype=np.float64) for w in ckpt.weights],
        biases=[np.array(b, dtype=np.float64) for b in ckpt.biases],
        activation=Activation(ckpt.activation),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    payload = {
        "format_version": ckpt.format_version,
        "layer_dims": list(ckpt.layer_dims),
        "weights": [w.tolist() for w in ckpt.weights],
        "biases": [b.tolist() for b in ckpt.biases],
        "activation": ckpt.activation,
        "normalization": ckpt.normalization,
        "n_classes": ckpt.n_classes,
        "train_config": ckpt.train_config,
        "rng_digest": ckpt.rng_digest,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_text(text, encoding="ascii")


def load_checkpoint(path: str | Path) -> Checkpoint:
    text = Path(path).read_text(encoding="ascii")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt checkpoint at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: checkpoint must be a JSON object")
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version!r}")
    try:
        layer_dims = tuple(int(d) for d in payload["layer_dims"])
        weights = [np.array(w, dtype=np.float64) for w in payload["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
        ckpt = Checkpoint(
            format_version=version,
            layer_dims=layer_dims,
            weights=weights,
            biases=biases,
            activation=str(payload["activation"]),
            normalization=dict(payload["normalization"]),
            n_classes=int(payload["n_classes"]),
            train_config=dict(payload["train_config"]),
            rng_digest=str(payload["rng_digest"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed checkpoint field: {exc}") from exc
    for i, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        if ckpt.weights[i].shape != (fan_in, fan_out) or ckpt.biases[i].shape != (fan_out,):
            raise FormatError(f"{path}: parameter shapes disagree with layer_dims")
    return ckpt


def _rng_digest(rng: np.random.Generator) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True, default=str)
    return hashlib.sha256(state.encode("ascii")).hexdigest()


def fit(
    ind_set: Dataset,
    ood_set: Dataset | None,
    cfg: TrainConfig,
    hidden: tuple[int, ...] = (128, 64),
) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Train a fresh MLP on the datasets; returns checkpoint and epoch log.

    Architecture is input -> hidden... -> K. Seeding: the config seed is
    split into one stream for weight init and one for batch construction.
    """
    n_classes = ind_set.n_classes
    init_seed, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init((ind_set.dim, *hidden, n_classes), init_seed)
    rng = np.random.default_rng(batch_seed)
    state = MomentumState(model)

    metrics: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        losses: list[LossValue] = []
        alpha_m = 0.0
        m_floor = 1.0
        for batch_id, batch in enumerate(make_batches(ind_set, ood_set, cfg, rng)):
            loss_value, diag = train_step(model, batch, cfg, state, batch_id=(epoch, batch_id))
            losses.append(loss_value)
            alpha_m = max(alpha_m, diag.alpha_m)
            m_floor = min(m_floor, diag.m)
        wall_ms = (time.perf_counter() - started) * 1000.0
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                ce_term=float(np.mean([l.ce_term for l in losses])),
                ood_term=float(np.mean([l.ood_term for l in losses])),
                total=float(np.mean([l.total for l in losses])),
                alpha_m=alpha_m,
                m=m_floor,
                wall_ms=wall_ms,
            )
        )
    ckpt = checkpoint_from_model(model, ind_set.normalization, cfg, _rng_digest(rng))
    return ckpt, metrics
