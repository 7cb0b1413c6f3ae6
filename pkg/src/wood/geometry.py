"""Cost-matrix construction and the transport-based OOD score.

The score of a softmax vector ``f`` is its transport distance to the nearest
class one-hot. Two cost families are supported: the binary matrix (all
misclassification costs equal) and the dynamic matrix built from ``f``
itself, which is label-invariant and needs a single evaluation. Both have
exact closed forms when the comparison target is one-hot, which is the
default evaluation path; the Sinkhorn path is retained for gradient
mechanics and benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, NumericError
from .transport import (
    CostKind,
    CostMatrix,
    SinkhornConfig,
    as_prob_vector,
    one_hot,
    sinkhorn_distance,
)


class EvalPath(Enum):
    """How one-hot transport distances are evaluated."""

    CLOSED_FORM = "closed"
    SINKHORN = "sinkhorn"


@dataclass(frozen=True)
class ScoreConfig:
    """Cost-matrix family plus evaluation route for the OOD score."""

    matrix_kind: CostKind = CostKind.DYNAMIC
    evaluation: EvalPath = EvalPath.CLOSED_FORM
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)


def binary_matrix(n_classes: int) -> CostMatrix:
    """Unit cost for any class change, zero for staying put."""
    if n_classes < 2:
        raise DimensionError(f"binary matrix needs K >= 2, got {n_classes}")
    entries = np.ones((n_classes, n_classes)) - np.eye(n_classes)
    return CostMatrix(entries=entries, kind=CostKind.BINARY)


def dynamic_matrix(f, k: int) -> CostMatrix:
    """Cost matrix of elementwise distances between ``f`` and the one-hot ``k``.

    Row ``k`` (the one-hot side under the library's row-marginal convention)
    holds ``1 - f``; every other row holds ``f``. Row ``k`` plus any other
    row is the all-ones vector.
    """
    f = as_prob_vector(f, "f")
    n = f.shape[0]
    if not 0 <= k < n:
        raise IndexError(f"class index {k} out of range for K={n}")
    entries = np.tile(f, (n, 1))
    entries[k, :] = 1.0 - f
    return CostMatrix(entries=entries, kind=CostKind.DYNAMIC)


def _sinkhorn_to_onehot(f: np.ndarray, k: int, cfg: ScoreConfig) -> float:
    if cfg.matrix_kind is CostKind.BINARY:
        M = binary_matrix(f.shape[0])
    else:
        M = dynamic_matrix(f, k)
    result = sinkhorn_distance(one_hot(k, f.shape[0]), f, M, cfg.sinkhorn)
    if not result.converged:
        raise NumericError(
            f"sinkhorn failed to converge after {result.iterations} iterations"
            f" (lam={cfg.sinkhorn.lam})"
        )
    return result.value


def wasserstein_to_onehot(f, k: int, cfg: ScoreConfig) -> float:
    """Transport distance from softmax output ``f`` to the one-hot of class ``k``.

    On the closed-form path the one-hot marginal forces a unique coupling:
    binary costs give ``1 - f[k]``; dynamic costs give ``1 - sum(f**2)``,
    which does not depend on ``k``.
    """
    f = as_prob_vector(f, "f")
    if not 0 <= k < f.shape[0]:
        raise IndexError(f"class index {k} out of range for K={f.shape[0]}")
    if cfg.evaluation is EvalPath.CLOSED_FORM:
        if cfg.matrix_kind is CostKind.BINARY:
            return 1.0 - float(f[k])
        return 1.0 - float(f @ f)
    return _sinkhorn_to_onehot(f, k, cfg)


def _binary_sinkhorn_min(f: np.ndarray, cfg: ScoreConfig) -> tuple[float, int]:
    best_value = np.inf
    best_k = 0
    for k in range(f.shape[0]):
        value = _sinkhorn_to_onehot(f, k, cfg)
        if value < best_value:
            best_value = value
            best_k = k
    return best_value, best_k


def wood_score(f, cfg: ScoreConfig) -> float:
    """OOD score: minimum transport distance from ``f`` to any class one-hot.

    Dynamic costs are label-invariant, so a single evaluation suffices; the
    binary family takes the minimum over all K classes (ties broken toward
    the lowest class index).
    """
    f = as_prob_vector(f, "f")
    if cfg.matrix_kind is CostKind.DYNAMIC:
        return wasserstein_to_onehot(f, 0, cfg)
    if cfg.evaluation is EvalPath.CLOSED_FORM:
        return 1.0 - float(np.max(f))
    return _binary_sinkhorn_min(f, cfg)[0]


def score_argmin_class(f, cfg: ScoreConfig) -> int:
    """Class index attaining the score minimum (0-based).

    Dynamic costs make every class equivalent, so class 0 is returned by
    convention. Ties under binary costs resolve to the lowest index.
    """
    f = as_prob_vector(f, "f")
    if cfg.matrix_kind is CostKind.DYNAMIC:
        return 0
    if cfg.evaluation is EvalPath.CLOSED_FORM:
        return int(np.argmax(f))
    return _binary_sinkhorn_min(f, cfg)[1]
