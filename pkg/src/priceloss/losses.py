"""Valuation-space and corrupted-label losses, plus dataset-level estimation.

Sign convention: losses are negative revenue, so estimators minimize and the
reported policy value (reward) is the negated mean loss.

The valuation loss vector for a policy has m+1 entries: slot 0 (buys at no
ladder price) is pinned to 0 and slot j is minus the expected margin the
policy collects from a customer whose valuation is p_j:

    lv[j] = - sum_{k <= j} pi(p_k | x) (p_k - C)

Every corrupted loss is linear in the policy probabilities, which the
dataset-level engine exploits: for each record it produces one coefficient
per rung such that

    corrupted loss of record i  =  sum_j pi(p_j | x_i) * coef[i, j]

with the coefficients independent of the policy. That one matrix serves both
evaluation (dot with the policy) and optimization (gradients through the
policy only).
"""

from __future__ import annotations

import numpy as np

from .estimators import (
    OUTCOME_FLOOR,
    EstimatorKind,
    ReweightMatrix,
    reweight_for,
)
from .ladder import Dataset, OutcomeDist, PolicyDist, PriceLadder, Propensities
from .transfer import lower_mask, upper_mask

VARIANCE_GUARD = -1e-8


def valuation_loss_vector(policy: PolicyDist, ladder: PriceLadder) -> np.ndarray:
    """Length-(m+1) loss vector for one policy decision; entry 0 is 0."""
    if policy.m != ladder.m:
        raise ValueError("policy and ladder sizes differ")
    out = np.zeros(ladder.m + 1)
    out[1:] = -np.cumsum(policy.probs * ladder.margins)
    return out


def valuation_loss_matrix(policy_matrix: np.ndarray, ladder: PriceLadder) -> np.ndarray:
    """Stacked loss vectors, one row per customer: (n, m+1)."""
    pm = np.atleast_2d(np.asarray(policy_matrix, dtype=np.float64))
    if pm.shape[1] != ladder.m:
        raise ValueError("policy matrix has the wrong number of rungs")
    out = np.zeros((pm.shape[0], ladder.m + 1))
    out[:, 1:] = -np.cumsum(pm * ladder.margins, axis=1)
    return out


def corrupted_loss_vector(reweight: ReweightMatrix, loss_vec: np.ndarray) -> np.ndarray:
    """Per-outcome corrupted losses R' lv, one entry per (price, sale) slot."""
    lv = np.asarray(loss_vec, dtype=np.float64)
    if lv.shape != (reweight.mat.shape[0],):
        raise ValueError(
            f"loss vector has length {lv.shape}, expected {reweight.mat.shape[0]}"
        )
    return reweight.mat.T @ lv


def conditional_variance(
    reweight: ReweightMatrix, loss_vec: np.ndarray, outcome_dist: OutcomeDist
) -> float:
    """Variance of the corrupted loss for one customer under ``outcome_dist``."""
    c = corrupted_loss_vector(reweight, loss_vec)
    f = outcome_dist.probs
    mean = float(f @ c)
    var = float(f @ (c * c)) - mean * mean
    if var < VARIANCE_GUARD:
        raise ArithmeticError(f"conditional variance came out negative: {var}")
    return max(var, 0.0)


# ---------------------------------------------------------------------------
# Dataset-level engine
# ---------------------------------------------------------------------------


def _demand_matrix(demand, features: np.ndarray) -> np.ndarray:
    if demand is None:
        raise ValueError("this estimator needs a demand model")
    if hasattr(demand, "sale_probs_matrix"):
        return np.asarray(demand.sale_probs_matrix(features), dtype=np.float64)
    return np.asarray(demand, dtype=np.float64)


def _floored_outcome_rows(g: np.ndarray, pi: np.ndarray, floor: float) -> np.ndarray:
    """Row-wise plug-in outcome distributions [g*pi, (1-g)*pi], floored."""
    f = np.hstack([g * pi, (1.0 - g) * pi])
    f = np.maximum(f, floor)
    return f / f.sum(axis=1, keepdims=True)


def _solved_reweight_columns(
    dataset: Dataset, kind: EstimatorKind, demand, floor: float
) -> np.ndarray:
    """Observed column R_i[:, k_i] of the per-record reweight matrix, (n, m+1).

    Uses the mask factorization of the transfer matrix so only one
    (m+1)-dimensional solve per record is needed, batched across records.
    """
    m = dataset.m
    n = dataset.n
    pi = dataset.propensities
    u, low = upper_mask(m), lower_mask(m)
    j0 = dataset.price_index - 1
    sold = dataset.sold
    # Row of [U; L] matching each record's observed outcome.
    w = np.where(sold[:, None], u[j0], low[j0])  # (n, m+1)

    if kind == EstimatorKind.ROBUST:
        gram = np.einsum("ki,nk,kj->nij", u, pi, u) + np.einsum(
            "ki,nk,kj->nij", low, pi, low
        )
        rhs = w
    elif kind in (EstimatorKind.MIN_VARIANCE, EstimatorKind.DOUBLY_ROBUST):
        g = _demand_matrix(demand, dataset.features)
        f = _floored_outcome_rows(g, pi, floor)
        sale_w = pi * pi / f[:, :m]
        nosale_w = pi * pi / f[:, m:]
        gram = np.einsum("ki,nk,kj->nij", u, sale_w, u) + np.einsum(
            "ki,nk,kj->nij", low, nosale_w, low
        )
        picked_pi = pi[np.arange(n), j0]
        picked_f = f[np.arange(n), dataset.outcome_indices()]
        rhs = w * (picked_pi / picked_f)[:, None]
    else:
        raise ValueError(f"no solved path for estimator kind {kind}")
    return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]


def loss_coefficients(
    dataset: Dataset,
    ladder: PriceLadder,
    kind: EstimatorKind,
    demand=None,
    switching_weight: float | None = None,
    floor: float = OUTCOME_FLOOR,
) -> np.ndarray:
    """Per-record, per-rung coefficients of the corrupted loss, shape (n, m).

    The corrupted loss of record i under any policy is the dot product of the
    policy's probabilities at x_i with row i of this matrix.
    """
    m = dataset.m
    if ladder.m != m:
        raise ValueError("ladder size does not match the dataset")
    n = dataset.n
    margins = ladder.margins
    j0 = dataset.price_index - 1
    rows = np.arange(n)
    picked_pi = dataset.propensities[rows, j0]

    if kind == EstimatorKind.IPS:
        coef = np.zeros((n, m))
        sold = dataset.sold
        coef[rows[sold], j0[sold]] = -margins[j0[sold]] / picked_pi[sold]
        return coef

    if kind == EstimatorKind.CIPS:
        coef = np.tile(-margins, (n, 1))
        unsold = ~dataset.sold
        coef[rows[unsold], j0[unsold]] += margins[j0[unsold]] / picked_pi[unsold]
        return coef

    if kind == EstimatorKind.SWITCHING:
        if switching_weight is None:
            raise ValueError("switching estimator needs an explicit weight")
        if not 0.0 <= switching_weight <= 1.0:
            raise ValueError("switching weight must lie in [0, 1]")
        mv = loss_coefficients(dataset, ladder, EstimatorKind.MIN_VARIANCE, demand, floor=floor)
        rob = loss_coefficients(dataset, ladder, EstimatorKind.ROBUST, floor=floor)
        return switching_weight * mv + (1.0 - switching_weight) * rob

    cols = _solved_reweight_columns(dataset, kind, demand, floor)
    # tail[v] = sum_{u >= v} col[u]; coefficient j is -margin_j * tail[j+1].
    tails = np.cumsum(cols[:, ::-1], axis=1)[:, ::-1]
    return -margins * tails[:, 1:]


def per_record_losses(
    dataset: Dataset,
    policy_matrix: np.ndarray,
    ladder: PriceLadder,
    kind: EstimatorKind,
    demand=None,
    switching_weight: float | None = None,
) -> np.ndarray:
    """Corrupted loss of every record under the given policy probabilities."""
    pm = np.atleast_2d(np.asarray(policy_matrix, dtype=np.float64))
    if pm.shape != (dataset.n, dataset.m):
        raise ValueError(f"policy matrix must be (n, m) = {(dataset.n, dataset.m)}")
    coef = loss_coefficients(dataset, ladder, kind, demand, switching_weight)
    return np.sum(pm * coef, axis=1)


def estimate_policy_value(
    dataset: Dataset,
    policy_matrix: np.ndarray,
    ladder: PriceLadder,
    kind: EstimatorKind,
    demand=None,
    switching_weight: float | None = None,
) -> float:
    """Mean corrupted loss of the dataset under the policy (negative revenue)."""
    losses = per_record_losses(
        dataset, policy_matrix, ladder, kind, demand, switching_weight
    )
    return float(losses.mean())


def per_record_losses_reference(
    dataset: Dataset,
    policy_matrix: np.ndarray,
    ladder: PriceLadder,
    kind: EstimatorKind,
    demand=None,
    switching_weight: float | None = None,
) -> np.ndarray:
    """Slow per-record path building one explicit reweight matrix per row.

    Kept as the readable, contract-level implementation; the batched engine
    must agree with it to floating-point noise.
    """
    pm = np.atleast_2d(np.asarray(policy_matrix, dtype=np.float64))
    g = None
    if kind in (EstimatorKind.MIN_VARIANCE, EstimatorKind.DOUBLY_ROBUST, EstimatorKind.SWITCHING):
        g = _demand_matrix(demand, dataset.features)
    out = np.empty(dataset.n)
    k = dataset.outcome_indices()
    for i in range(dataset.n):
        pi0 = Propensities(dataset.propensities[i])
        outcome_hat = None
        if g is not None:
            # Raw plug-in rows; the constructor applies the floor exactly once,
            # matching the batched path.
            outcome_hat = OutcomeDist(
                np.hstack([g[i] * pi0.probs, (1.0 - g[i]) * pi0.probs])
            )
        reweight = reweight_for(kind, pi0, outcome_hat, switching_weight)
        lv = valuation_loss_vector(PolicyDist(pm[i]), ladder)
        out[i] = corrupted_loss_vector(reweight, lv)[k[i]]
    return out
