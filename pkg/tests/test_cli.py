import json

import numpy as np
import pytest

from priceloss import bench
from priceloss.cli import main
from priceloss.ladder import read_csv
from priceloss.policy import LinearSoftmaxPolicy
from priceloss.ladder import PriceLadder


def test_gen_writes_valid_schema(tmp_path):
    out = tmp_path / "data.csv"
    assert main(["gen", "--n", "50", "--seed", "3", "--out", str(out)]) == 0
    ds = read_csv(str(out))
    assert ds.n == 50
    assert ds.m == 5
    assert ds.valuations is not None


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["gen", "--n", "30", "--seed", "9", "--out", str(a)])
    main(["gen", "--n", "30", "--seed", "9", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_oracle_check_passes_and_negative_control(tmp_path):
    out = tmp_path / "oracle.csv"
    assert main(["oracle-check", "--seed", "1", "--instances", "20", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0].startswith("check,seed,max_error")
    assert all(line.endswith("pass") for line in rows[1:])
    assert (
        main(
            [
                "oracle-check",
                "--seed",
                "1",
                "--instances",
                "5",
                "--inject-broken",
                "--out",
                str(tmp_path / "bad.csv"),
            ]
        )
        == 1
    )


def test_oracle_check_verdicts_stable_across_seeds(tmp_path):
    for seed in ("2", "7"):
        code = main(
            ["oracle-check", "--seed", seed, "--instances", "15", "--out", str(tmp_path / f"o{seed}.csv")]
        )
        assert code == 0


def _write_policy(tmp_path, kind="constant"):
    path = tmp_path / "policy.json"
    if kind == "constant":
        doc = {
            "type": "constant",
            "probs": [0.2, 0.2, 0.2, 0.2, 0.2],
            "ladder": {"prices": [1, 2, 3, 4, 5], "unit_cost": 0.0},
        }
        path.write_text(json.dumps(doc))
    else:
        pol = LinearSoftmaxPolicy(
            theta=np.zeros((5, 11)), ladder=PriceLadder(np.arange(1.0, 6.0))
        )
        path.write_text(pol.to_json())
    return path


def test_eval_csv_round_trip(tmp_path, capsys):
    data = tmp_path / "data.csv"
    main(["gen", "--n", "400", "--seed", "5", "--out", str(data)])
    policy = _write_policy(tmp_path, "linear")
    out = tmp_path / "result.json"
    code = main(["eval-csv", str(data), "--policy", str(policy), "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["n"] == 400
    assert set(doc["estimators"]) == {"ips", "mv", "robust", "cmix"}
    assert "chosen_c" in doc["estimators"]["cmix"]
    assert doc["min_propensity"] > 0


def test_eval_csv_on_policy_ips_identity(tmp_path):
    # constant logging propensities; evaluating that same constant policy with
    # IPS returns exactly the empirical mean revenue
    rng = np.random.default_rng(0)
    n, m = 200, 3
    rows = ["x_0,price_index,sold"]
    prices = np.array([1.0, 2.0, 3.0])
    revenue = []
    for i in range(n):
        p = rng.integers(1, m + 1)
        sold = int(rng.random() < 0.5)
        revenue.append(prices[p - 1] * sold)
        rows.append(f"{rng.standard_normal():.6f},{p},{sold}")
    data = tmp_path / "data.csv"
    data.write_text("\n".join(rows) + "\n")
    policy = tmp_path / "policy.json"
    policy.write_text(
        json.dumps(
            {
                "type": "constant",
                "probs": [1 / 3, 1 / 3, 1 / 3],
                "ladder": {"prices": [1, 2, 3], "unit_cost": 0.0},
            }
        )
    )
    out = tmp_path / "res.json"
    code = main(
        [
            "eval-csv",
            str(data),
            "--policy",
            str(policy),
            "--estimators",
            "ips",
            "--propensities",
            "0.3333333333333333,0.3333333333333333,0.3333333333333333",
            "--ladder",
            "1,2,3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert abs(doc["estimators"]["ips"]["estimated_reward"] - np.mean(revenue)) < 1e-9


def test_eval_csv_schema_violation_exits_two(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x_0,price_index,sold\n0.1,9,1\n")
    policy = _write_policy(tmp_path, "constant")
    code = main(
        ["eval-csv", str(bad), "--policy", str(policy), "--propensities", "0.2,0.2,0.2,0.2,0.2", "--ladder", "1,2,3,4,5"]
    )
    assert code == 2


def test_eval_csv_missing_ladder_exits_two(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x_0,price_index,sold,pi_1,pi_2\n0.1,1,1,0.5,0.5\n")
    policy = tmp_path / "p.json"
    policy.write_text(json.dumps({"type": "constant", "probs": [0.5, 0.5]}))
    assert main(["eval-csv", str(data), "--policy", str(policy)]) == 2


def test_sweep_with_config_and_byte_identical_reruns(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "experiment": "eval-sweep",
                "n_grid": [40],
                "reps": 3,
                "seed": 2,
                "estimators": ["ips", "robust"],
            }
        )
    )
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["eval-sweep", "--config", str(config), "--out", str(out_a)]) == 0
    assert main(["eval-sweep", "--config", str(config), "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    header = out_a.read_text().splitlines()[0]
    assert header == ",".join(bench.RESULT_COLUMNS)


def test_sweep_rows_carry_seed_and_hash(tmp_path):
    cfg = bench.config_from_dict(
        {"n_grid": [30], "reps": 2, "seed": 4, "estimators": ["robust"]}
    )
    rows = bench.run_eval_sweep(cfg)
    assert all(r.seed == 4 for r in rows)
    assert len({r.config_hash for r in rows}) == 1
    aggregates = [r for r in rows if r.stderr is not None]
    assert aggregates and all(r.rep == 2 for r in aggregates)


def test_bad_config_exits_two(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"not_a_key": 1}))
    assert main(["eval-sweep", "--config", str(config)]) == 2


def test_unknown_estimator_exits_two(tmp_path):
    data = tmp_path / "d.csv"
    main(["gen", "--n", "20", "--seed", "1", "--out", str(data)])
    policy = _write_policy(tmp_path, "linear")
    assert (
        main(["eval-csv", str(data), "--policy", str(policy), "--estimators", "bogus"])
        == 2
    )
