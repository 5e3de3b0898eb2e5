"""Command-line harness: oracle checks, benchmark sweeps, data generation,
and external-dataset evaluation.

Exit codes: 0 success, 1 oracle/acceptance failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import bench, oracle
from .demand import fit_tlearner
from .estimators import EstimatorKind
from .ladder import PriceLadder, SchemaError, read_csv, validate, write_csv
from .losses import per_record_losses
from .policy import ConstantPolicy, LinearSoftmaxPolicy, select_switching_weight
from .ladder import PolicyDist
from .synthgen import GenConfig, SurfaceKind, sample_surface, generate_dataset


class InputError(ValueError):
    pass


def _load_policy(path: str):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read policy file {path}: {exc}") from exc
    kind = doc.get("type")
    if kind == "linear_softmax":
        return LinearSoftmaxPolicy.from_json(json.dumps(doc)), doc
    if kind == "constant":
        return ConstantPolicy(PolicyDist(np.asarray(doc["probs"], dtype=np.float64))), doc
    raise InputError(f"unsupported policy type {kind!r} in {path}")


def _ladder_from(args, policy_doc) -> PriceLadder:
    if args.ladder:
        prices = np.asarray([float(p) for p in args.ladder.split(",")])
        return PriceLadder(prices, args.unit_cost)
    if policy_doc and "ladder" in policy_doc:
        lad = policy_doc["ladder"]
        return PriceLadder(
            np.asarray(lad["prices"], dtype=np.float64), float(lad.get("unit_cost", 0.0))
        )
    raise InputError("no ladder given: pass --ladder or use a policy file that carries one")


def cmd_oracle_check(args) -> int:
    rows = oracle.run_all(seed=args.seed, n_instances=args.instances)
    if args.inject_broken:
        rows.append(oracle.SweepRow("injected_negative_control", args.seed, 1.0, 1e-9))
    failures = [r for r in rows if not r.passed]
    out = args.out or sys.stdout
    own = isinstance(out, str)
    f = open(out, "w", newline="") if own else out
    try:
        writer = csv.writer(f)
        writer.writerow(["check", "seed", "max_error", "tolerance", "verdict"])
        for row in rows:
            writer.writerow(row.as_csv_row())
    finally:
        if own:
            f.close()
    for row in failures:
        print(f"FAILED: {','.join(row.as_csv_row())}", file=sys.stderr)
    return 1 if failures else 0


def _load_bench_config(args) -> bench.BenchConfig:
    overrides = {"seed": args.seed, "reps": args.reps}
    try:
        if args.config:
            return bench.load_config(args.config, **overrides)
        return bench.config_from_dict({}, **overrides)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise InputError(f"bad config: {exc}") from exc


def cmd_sweep(args, runner) -> int:
    cfg = _load_bench_config(args)
    rows = runner(cfg)
    bench.write_rows(rows, args.out or sys.stdout)
    return 0


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    try:
        ladder = PriceLadder(
            np.asarray([float(p) for p in args.ladder.split(",")]), args.unit_cost
        )
        kind = SurfaceKind(args.surface)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    surface = sample_surface(rng, kind, args.d, args.shift)
    cfg = GenConfig(
        n=args.n, d=args.d, ladder=ladder, softmax_scale=args.lam,
        surface_kind=kind, logit_shift=args.shift,
    )
    dataset = generate_dataset(surface, cfg, rng)
    write_csv(dataset, args.out or sys.stdout)
    return 0


def cmd_eval_csv(args) -> int:
    policy, policy_doc = _load_policy(args.policy)
    ladder = _ladder_from(args, policy_doc)
    const = None
    if args.propensities:
        const = np.asarray([float(p) for p in args.propensities.split(",")])
    try:
        dataset = read_csv(args.dataset, constant_propensities=const)
    except SchemaError as exc:
        raise InputError(f"schema violation: {exc}") from exc
    if dataset.m != ladder.m:
        raise InputError(
            f"dataset has {dataset.m} propensity columns but the ladder has {ladder.m} rungs"
        )
    report = validate(dataset)
    pm = policy.probs_matrix(dataset.features)

    kinds = [k.strip() for k in args.estimators.split(",")]
    needs_demand = any(k in ("mv", "dr", "cmix") for k in kinds)
    demand = fit_tlearner(dataset, ladder) if needs_demand else None

    results = {}
    for name in kinds:
        try:
            kind = EstimatorKind(name if name != "dr" else "mv")
        except ValueError as exc:
            raise InputError(f"unknown estimator {name!r}") from exc
        weight = None
        if kind == EstimatorKind.SWITCHING:
            weight = select_switching_weight(dataset, pm, ladder, demand)
        losses = per_record_losses(dataset, pm, ladder, kind, demand, weight)
        entry = {
            "estimated_loss": float(losses.mean()),
            "estimated_reward": float(-losses.mean()),
            "loss_variance": float(losses.var(ddof=1)) if dataset.n > 1 else 0.0,
        }
        if weight is not None:
            entry["chosen_c"] = weight
        results[name] = entry

    doc = {
        "n": dataset.n,
        "min_propensity": float(dataset.propensities.min()),
        "overlap_violations": len(report.overlap_violations),
        "estimators": results,
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priceloss",
        description="Benchmarks for unbiased pricing-loss estimators on observational sales data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle-check", help="run all brute-force verifier sweeps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--inject-broken", action="store_true", help=argparse.SUPPRESS)

    for name, help_text in (
        ("eval-sweep", "policy-evaluation accuracy sweep"),
        ("learn-sweep", "policy-optimization reward sweep"),
        ("sales-regime", "evaluation/learning at shifted sale probabilities"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("gen", help="emit a synthetic dataset CSV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=5.0)
    p.add_argument("--surface", default="base", choices=[k.value for k in SurfaceKind])
    p.add_argument("--ladder", default="1,2,3,4,5")
    p.add_argument("--unit-cost", type=float, default=0.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval-csv", help="evaluate a policy file on an external dataset CSV")
    p.add_argument("dataset")
    p.add_argument("--policy", required=True)
    p.add_argument("--estimators", default="ips,mv,robust,cmix")
    p.add_argument("--propensities", default=None, help="constant pi_1,..,pi_m")
    p.add_argument("--ladder", default=None, help="prices p_1,..,p_m")
    p.add_argument("--unit-cost", type=float, default=0.0)
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle-check":
            return cmd_oracle_check(args)
        if args.command == "eval-sweep":
            return cmd_sweep(args, bench.run_eval_sweep)
        if args.command == "learn-sweep":
            return cmd_sweep(args, bench.run_learn_sweep)
        if args.command == "sales-regime":
            return cmd_sweep(args, bench.run_sales_regime)
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "eval-csv":
            return cmd_eval_csv(args)
        raise InputError(f"unknown command {args.command!r}")
    except (InputError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
