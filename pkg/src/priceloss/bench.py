"""Benchmark suites: seeded, replicated experiments with CSV output.

Each replication draws a fresh demand surface, builds the policy under
evaluation from a small training split, generates observational data from
the logging policy, and then either estimates the policy's value (evaluation
suites) or trains a new policy against each corrupted loss (optimization
suites). Replications use counter-derived RNG streams, so results do not
depend on execution order and parallel runs reproduce serial ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .demand import blend_alpha, fit_tlearner
from .estimators import EstimatorKind
from .ladder import Dataset, PriceLadder
from .losses import estimate_policy_value, loss_coefficients
from .policy import (
    TrainConfig,
    optimize_policy,
    select_switching_weight,
    select_switching_weight_for_training,
    target_policy_for_evaluation,
)
from .synthgen import (
    DemandSurface,
    GenConfig,
    SurfaceKind,
    generate_dataset,
    sample_surface,
    true_policy_value,
)

RESULT_COLUMNS = [
    "experiment",
    "method",
    "n",
    "alpha",
    "shift",
    "rep",
    "metric",
    "value",
    "stderr",
    "seed",
    "config_hash",
]

DEFAULT_ESTIMATORS = ("ips", "mv", "robust", "cmix")


@dataclass(frozen=True)
class BenchConfig:
    experiment: str = "eval-sweep"
    n_grid: tuple[int, ...] = (50, 100, 500, 2000)
    alpha_grid: tuple[float, ...] | None = None  # None: fit demand from the data
    d: int = 10
    ladder: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    unit_cost: float = 0.0
    lam: float = 5.0
    shift: float = 0.0
    reps: int = 500
    seed: int = 0
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS
    surface: str = "base"
    price_scale: float = 5.0
    n_policy_train: int = 100  # split used to build the evaluated policy
    n_demand_fit: int = 100  # independent split used to fit the plug-in demand
    test_size: int = 10000
    train: dict = field(default_factory=lambda: {"lr": 0.05, "iters": 2000})
    cv_folds: int = 5
    workers: int = 1

    def price_ladder(self) -> PriceLadder:
        return PriceLadder(np.asarray(self.ladder, dtype=np.float64), self.unit_cost)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=float(self.train.get("lr", 0.05)),
            max_iters=int(self.train.get("iters", 2000)),
        )

    def config_hash(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(doc.encode()).hexdigest()[:12]


def load_config(path: str, **overrides) -> BenchConfig:
    with open(path) as f:
        doc = json.load(f)
    return config_from_dict(doc, **overrides)


def config_from_dict(doc: dict, **overrides) -> BenchConfig:
    known = {f for f in BenchConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
    for key in ("n_grid", "ladder", "estimators"):
        if key in merged and merged[key] is not None:
            merged[key] = tuple(merged[key])
    if merged.get("alpha_grid") is not None:
        merged["alpha_grid"] = tuple(float(a) for a in merged["alpha_grid"])
    return BenchConfig(**merged)


def _rep_rng(seed: int, *keys: float) -> np.random.Generator:
    ints = [seed] + [int(abs(k) * 1000) + (1 << 20) * (k < 0) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(ints))


def _kind(name: str) -> EstimatorKind:
    return EstimatorKind(name if name != "dr" else "mv")


# ---------------------------------------------------------------------------
# Single replications
# ---------------------------------------------------------------------------


def _gen_config(cfg: BenchConfig, n: int) -> GenConfig:
    return GenConfig(
        n=n,
        d=cfg.d,
        ladder=cfg.price_ladder(),
        softmax_scale=cfg.lam,
        surface_kind=SurfaceKind(cfg.surface),
        logit_shift=cfg.shift,
        price_scale=cfg.price_scale,
    )


def _plugin_demand(cfg: BenchConfig, surface, ladder, alpha, rng):
    """The direct-method model: an alpha blend of the truth, or a T-learner
    fit on an independent draw so its quality does not depend on the
    evaluation sample (and it cannot memorize the records it reweights)."""
    if alpha is not None:
        return blend_alpha(surface.as_model(ladder), alpha)
    split = generate_dataset(surface, _gen_config(cfg, cfg.n_demand_fit), rng)
    return fit_tlearner(split, ladder)


def eval_replication(
    cfg: BenchConfig, n: int, alpha: float | None, rep: int
) -> dict[str, float]:
    """One evaluation draw: squared error of each estimator's value estimate."""
    rng = _rep_rng(cfg.seed, 1, n, -1.0 if alpha is None else alpha, cfg.shift, rep)
    ladder = cfg.price_ladder()
    surface = sample_surface(
        rng, SurfaceKind(cfg.surface), cfg.d, cfg.shift, cfg.price_scale
    )
    train_split = generate_dataset(surface, _gen_config(cfg, cfg.n_policy_train), rng)
    policy = target_policy_for_evaluation(train_split, ladder)
    demand = _plugin_demand(cfg, surface, ladder, alpha, rng)
    obs = generate_dataset(surface, _gen_config(cfg, n), rng)
    pm = policy.probs_matrix(obs.features)
    truth = true_policy_value(pm, obs.valuations, ladder)

    out: dict[str, float] = {}
    for name in cfg.estimators:
        weight = None
        if name == "cmix":
            weight = select_switching_weight(
                obs, pm, ladder, demand, folds=cfg.cv_folds
            )
        value = estimate_policy_value(
            obs, pm, ladder, _kind(name), demand, switching_weight=weight
        )
        out[name] = (value - truth) ** 2
    return out


def learn_replication(
    cfg: BenchConfig, n: int, alpha: float | None, rep: int
) -> dict[str, float]:
    """One optimization draw: true test reward of each trained policy."""
    rng = _rep_rng(cfg.seed, 2, n, -1.0 if alpha is None else alpha, cfg.shift, rep)
    ladder = cfg.price_ladder()
    surface = sample_surface(
        rng, SurfaceKind(cfg.surface), cfg.d, cfg.shift, cfg.price_scale
    )
    obs = generate_dataset(surface, _gen_config(cfg, n), rng)
    demand = _plugin_demand(cfg, surface, ladder, alpha, rng)
    test = generate_dataset(surface, _gen_config(cfg, cfg.test_size), rng)

    tc = cfg.train_config()
    out: dict[str, float] = {}
    for name in cfg.estimators:
        weight = None
        if name == "cmix":
            weight = select_switching_weight_for_training(
                obs, ladder, demand, folds=cfg.cv_folds, config=tc
            )
        result = optimize_policy(
            obs, ladder, _kind(name), demand, config=tc, switching_weight=weight
        )
        test_pm = result.policy.probs_matrix(test.features)
        out[name] = -true_policy_value(test_pm, test.valuations, ladder)
    return out


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    experiment: str
    method: str
    n: int
    alpha: float | None
    shift: float
    rep: int | str
    metric: str
    value: float
    stderr: float | None
    seed: int
    config_hash: str

    def as_csv(self) -> list[str]:
        return [
            self.experiment,
            self.method,
            str(self.n),
            "" if self.alpha is None else repr(float(self.alpha)),
            repr(float(self.shift)),
            str(self.rep),
            self.metric,
            repr(float(self.value)),
            "" if self.stderr is None else repr(float(self.stderr)),
            str(self.seed),
            self.config_hash,
        ]


def _run_reps(fn, cfg: BenchConfig, n: int, alpha, reps: int) -> list[dict[str, float]]:
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(fn, cfg, n, alpha, rep) for rep in range(reps)]
            return [f.result() for f in futures]
    return [fn(cfg, n, alpha, rep) for rep in range(reps)]


def _aggregate(
    cfg: BenchConfig,
    experiment: str,
    per_rep: list[dict[str, float]],
    n: int,
    alpha,
    metric: str,
    agg_metric: str,
) -> list[ResultRow]:
    chash = cfg.config_hash()
    rows: list[ResultRow] = []
    for rep, values in enumerate(per_rep):
        for method, value in values.items():
            rows.append(
                ResultRow(
                    experiment, method, n, alpha, cfg.shift, rep, metric, value, None,
                    cfg.seed, chash,
                )
            )
    for method in per_rep[0]:
        vals = np.asarray([r[method] for r in per_rep])
        stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(
            ResultRow(
                experiment, method, n, alpha, cfg.shift, len(vals), agg_metric,
                float(vals.mean()), stderr, cfg.seed, chash,
            )
        )
    return rows


def run_eval_sweep(cfg: BenchConfig) -> list[ResultRow]:
    rows: list[ResultRow] = []
    alphas: tuple[float | None, ...] = (
        (None,) if cfg.alpha_grid is None else cfg.alpha_grid
    )
    for n in cfg.n_grid:
        for alpha in alphas:
            per_rep = _run_reps(eval_replication, cfg, n, alpha, cfg.reps)
            rows += _aggregate(cfg, "eval-sweep", per_rep, n, alpha, "sq_error", "mse")
    return rows


def run_learn_sweep(cfg: BenchConfig) -> list[ResultRow]:
    rows: list[ResultRow] = []
    alphas: tuple[float | None, ...] = (
        (None,) if cfg.alpha_grid is None else cfg.alpha_grid
    )
    for n in cfg.n_grid:
        for alpha in alphas:
            per_rep = _run_reps(learn_replication, cfg, n, alpha, cfg.reps)
            rows += _aggregate(
                cfg, "learn-sweep", per_rep, n, alpha, "reward", "reward_mean"
            )
    return rows


def run_sales_regime(cfg: BenchConfig, learn_reps: int | None = None) -> list[ResultRow]:
    """Evaluation and optimization at logit shifts -10 / 0 / +10, n = 500."""
    rows: list[ResultRow] = []
    shifts = (-10.0, 0.0, 10.0)
    estimators = tuple(e for e in cfg.estimators if e in ("ips", "robust")) or (
        "ips",
        "robust",
    )
    n = cfg.n_grid[0] if len(cfg.n_grid) == 1 else 500
    lreps = learn_reps if learn_reps is not None else max(1, cfg.reps // 25)
    for shift in shifts:
        shifted = replace(cfg, shift=shift, estimators=estimators)
        per_rep = _run_reps(eval_replication, shifted, n, None, cfg.reps)
        rows += _aggregate(shifted, "sales-regime", per_rep, n, None, "sq_error", "mse")
        per_rep = _run_reps(learn_replication, shifted, n, None, lreps)
        rows += _aggregate(
            shifted, "sales-regime", per_rep, n, None, "reward", "reward_mean"
        )
    return rows


def write_rows(rows: list[ResultRow], path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(f)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())
    finally:
        if own:
            f.close()


def aggregate_value(rows: list[ResultRow], method: str, metric: str, **match) -> tuple[float, float]:
    """Pull (mean, stderr) of one aggregate cell out of a result list."""
    for row in rows:
        if row.method != method or row.metric != metric or row.stderr is None:
            continue
        if all(getattr(row, k) == v for k, v in match.items()):
            return row.value, row.stderr
    raise KeyError(f"no aggregate row for method={method} metric={metric} {match}")
