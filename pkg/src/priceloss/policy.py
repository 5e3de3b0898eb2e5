"""Linear-softmax pricing policies and empirical risk minimization.

The corrupted losses are linear in the policy's rung probabilities, so the
objective for a dataset reduces to ``mean_i <softmax(theta [x_i; 1]), coef_i>``
with the coefficient rows supplied by the losses engine. Gradients therefore
flow only through the softmax and the optimization is a plain full-batch
adaptive-moment descent.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .demand import DemandModel, FitConfig, fit_tlearner
from .estimators import EstimatorKind
from .ladder import Dataset, PolicyDist, PriceLadder
from .losses import loss_coefficients

logger = logging.getLogger(__name__)

# Empirical loss rising by more than this over a 200-iteration window is
# logged as a descent anomaly (diagnostic only).
DESCENT_WINDOW = 200
DESCENT_SLACK = 1e-6


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def with_bias(features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(features)
    return np.hstack([features, np.ones((features.shape[0], 1))])


class Policy:
    """Interface: rung probabilities for one or many customers."""

    def probs_matrix(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def probs(self, x: np.ndarray) -> PolicyDist:
        return PolicyDist(self.probs_matrix(np.atleast_2d(x))[0])


@dataclass
class LinearSoftmaxPolicy(Policy):
    """One linear score per rung (bias last), normalized by a softmax."""

    theta: np.ndarray  # (m, d + 1)
    ladder: PriceLadder

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape[0] != self.ladder.m:
            raise ValueError("theta must have one row per ladder rung")

    def probs_matrix(self, features: np.ndarray) -> np.ndarray:
        return softmax_rows(with_bias(features) @ self.theta.T)

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "linear_softmax",
                "theta": self.theta.tolist(),
                "ladder": {
                    "prices": self.ladder.prices.tolist(),
                    "unit_cost": self.ladder.unit_cost,
                },
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LinearSoftmaxPolicy":
        doc = json.loads(text)
        if doc.get("type") != "linear_softmax":
            raise ValueError(f"unsupported policy type: {doc.get('type')!r}")
        ladder = PriceLadder(
            np.asarray(doc["ladder"]["prices"], dtype=np.float64),
            float(doc["ladder"].get("unit_cost", 0.0)),
        )
        return cls(theta=np.asarray(doc["theta"], dtype=np.float64), ladder=ladder)


@dataclass
class ConstantPolicy(Policy):
    """Same rung distribution for every customer."""

    dist: PolicyDist

    def probs_matrix(self, features: np.ndarray) -> np.ndarray:
        n = np.atleast_2d(features).shape[0]
        return np.tile(self.dist.probs, (n, 1))


@dataclass
class GreedyDemandPolicy(Policy):
    """Deterministic: pick the rung with the highest estimated reward.

    Ties break toward the lower rung (argmax returns the first maximum).
    """

    demand: DemandModel
    ladder: PriceLadder

    def probs_matrix(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        rewards = self.demand.sale_probs_matrix(features) * self.ladder.margins
        best = np.argmax(rewards, axis=1)
        out = np.zeros((features.shape[0], self.ladder.m))
        out[np.arange(features.shape[0]), best] = 1.0
        return out


def policy_probs(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Softmax rung probabilities for a single customer."""
    theta = np.asarray(theta, dtype=np.float64)
    return softmax_rows(with_bias(x) @ theta.T)[0]


def target_policy_for_evaluation(
    train_split: Dataset, ladder: PriceLadder, fit_config: FitConfig | None = None
) -> GreedyDemandPolicy:
    """The to-be-evaluated policy: greedy on a demand fit from a small split."""
    if train_split.n == 0:
        raise ValueError("target policy needs a nonempty training split")
    model = fit_tlearner(train_split, ladder, fit_config)
    return GreedyDemandPolicy(demand=model, ladder=ladder)


# ---------------------------------------------------------------------------
# Empirical risk minimization
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    max_iters: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainResult:
    policy: LinearSoftmaxPolicy
    loss_history: np.ndarray
    descent_anomalies: int = 0


class TrainingDiverged(ArithmeticError):
    pass


def erm_loss_and_grad(
    theta: np.ndarray, features_bias: np.ndarray, coef: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean corrupted loss and its gradient in theta.

    ``coef`` rows are the per-record rung coefficients; the loss is linear
    in the policy probabilities, so the chain rule stops at the softmax.
    """
    probs = softmax_rows(features_bias @ theta.T)  # (n, m)
    per_record = np.sum(probs * coef, axis=1)
    loss = float(per_record.mean())
    if not np.isfinite(loss):
        return loss, np.zeros_like(theta)
    # d loss / d score_ij = p_ij (coef_ij - <p_i, coef_i>) / n
    inner = probs * (coef - per_record[:, None]) / coef.shape[0]
    grad = inner.T @ features_bias  # (m, d + 1)
    return loss, grad


def optimize_policy(
    dataset: Dataset,
    ladder: PriceLadder,
    kind: EstimatorKind,
    demand=None,
    config: TrainConfig | None = None,
    switching_weight: float | None = None,
    coef: np.ndarray | None = None,
) -> TrainResult:
    """Minimize the empirical corrupted loss over linear-softmax policies.

    ``coef`` may be supplied to skip recomputing the loss coefficients (they
    do not depend on the policy being trained).
    """
    cfg = config or TrainConfig()
    if coef is None:
        coef = loss_coefficients(dataset, ladder, kind, demand, switching_weight)
    Xb = with_bias(dataset.features)
    theta = np.zeros((ladder.m, Xb.shape[1]))
    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    history = np.empty(cfg.max_iters + 1)
    anomalies = 0
    for t in range(1, cfg.max_iters + 1):
        loss, grad = erm_loss_and_grad(theta, Xb, coef)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite training loss at iteration {t} "
                f"(|theta|_max={np.max(np.abs(theta)):.3g})"
            )
        history[t - 1] = loss
        if t > DESCENT_WINDOW and loss > history[t - 1 - DESCENT_WINDOW] + DESCENT_SLACK:
            anomalies += 1
            logger.warning(
                "empirical loss rose over a %d-iteration window at step %d",
                DESCENT_WINDOW,
                t,
            )
        mom = cfg.beta1 * mom + (1 - cfg.beta1) * grad
        vel = cfg.beta2 * vel + (1 - cfg.beta2) * grad * grad
        mhat = mom / (1 - cfg.beta1**t)
        vhat = vel / (1 - cfg.beta2**t)
        theta -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
    history[cfg.max_iters], _ = erm_loss_and_grad(theta, Xb, coef)
    return TrainResult(
        policy=LinearSoftmaxPolicy(theta=theta, ladder=ladder),
        loss_history=history,
        descent_anomalies=anomalies,
    )


# ---------------------------------------------------------------------------
# Switching-weight selection
# ---------------------------------------------------------------------------

DEFAULT_WEIGHT_GRID = tuple(np.linspace(0.0, 1.0, 10))
CV_FOLDS = 5


def _fold_slices(n: int, folds: int) -> list[np.ndarray]:
    idx = np.arange(n)
    return [idx[f::folds] for f in range(folds)]


def select_switching_weight(
    dataset: Dataset,
    policy_matrix: np.ndarray,
    ladder: PriceLadder,
    demand,
    grid=DEFAULT_WEIGHT_GRID,
    folds: int = CV_FOLDS,
) -> float:
    """Evaluation-mode choice: the weight with the lowest cross-fold variance.

    The per-record losses of the two mixture endpoints are computed once;
    the candidate's loss is their convex mix, and its empirical variance is
    averaged over held-out folds.
    """
    grid = [float(c) for c in grid]
    if not grid or any(not 0.0 <= c <= 1.0 for c in grid):
        raise ValueError("grid must be nonempty within [0, 1]")
    pm = np.atleast_2d(policy_matrix)
    coef_mv = loss_coefficients(dataset, ladder, EstimatorKind.MIN_VARIANCE, demand)
    coef_rob = loss_coefficients(dataset, ladder, EstimatorKind.ROBUST)
    loss_mv = np.sum(pm * coef_mv, axis=1)
    loss_rob = np.sum(pm * coef_rob, axis=1)
    slices = _fold_slices(dataset.n, min(folds, dataset.n))
    best_c, best_var = grid[0], np.inf
    for c in grid:
        mixed = c * loss_mv + (1.0 - c) * loss_rob
        fold_vars = [float(np.var(mixed[s])) for s in slices if s.size > 0]
        score = float(np.mean(fold_vars))
        if score < best_var:
            best_c, best_var = c, score
    return best_c


def select_switching_weight_for_training(
    dataset: Dataset,
    ladder: PriceLadder,
    demand,
    grid=DEFAULT_WEIGHT_GRID,
    folds: int = CV_FOLDS,
    config: TrainConfig | None = None,
) -> float:
    """Optimization-mode choice: weight whose trained policy cross-validates best.

    For each candidate weight, train on the complement of each fold and score
    the held-out estimated loss with the same switching estimator; pick the
    weight with the lowest average held-out loss.
    """
    grid = [float(c) for c in grid]
    if not grid or any(not 0.0 <= c <= 1.0 for c in grid):
        raise ValueError("grid must be nonempty within [0, 1]")
    if len(grid) == 1:
        return grid[0]
    coef_mv = loss_coefficients(dataset, ladder, EstimatorKind.MIN_VARIANCE, demand)
    coef_rob = loss_coefficients(dataset, ladder, EstimatorKind.ROBUST)
    slices = _fold_slices(dataset.n, min(folds, dataset.n))
    mask = np.ones(dataset.n, dtype=bool)
    best_c, best_loss = grid[0], np.inf
    for c in grid:
        coef = c * coef_mv + (1.0 - c) * coef_rob
        held_out = 0.0
        for s in slices:
            if s.size == 0 or s.size == dataset.n:
                continue
            mask[:] = True
            mask[s] = False
            train = dataset.subset(np.nonzero(mask)[0])
            result = optimize_policy(
                train, ladder, EstimatorKind.SWITCHING, config=config, coef=coef[mask]
            )
            probs = result.policy.probs_matrix(dataset.features[s])
            held_out += float(np.sum(probs * coef[s]) / s.size)
        if held_out < best_loss:
            best_c, best_loss = c, held_out
    return best_c
