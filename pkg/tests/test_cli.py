import json
import math

import numpy as np
import pytest

from renewal_rl.cli import (BASE_COLUMNS, build_env, build_policy, evaluate_policy, fmt, main,
                            read_csv, run_experiment, run_replication)
from renewal_rl.config import ConfigError, config_to_ini, parse_config
from renewal_rl.envs import InventoryModel, TabularMDP
from renewal_rl.mdp_core import BaseStock, PolicyParams, make_rng

SMALL = """
[defaults]
env = garnet
n_states = 5
n_actions = 2
branching = 3
reward_prob = 0.5
seed = 1
replications = 3
budget = 3000
record_every = 5

[tiny_lr]
algorithm = rmc_lr
shared_run = true

[tiny_sp]
algorithm = rmc_sp
c = 0.5
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_sections_and_defaults():
    cfgs = parse_config(SMALL)
    assert [c.name for c in cfgs] == ["tiny_lr", "tiny_sp"]
    assert cfgs[0].shared_run is True and cfgs[1].c == 0.5
    assert cfgs[0].budget == 3000 and cfgs[1].n_states == 5
    assert parse_config(SMALL, seed=9)[0].seed == 9


def test_config_round_trip():
    cfgs = parse_config(SMALL)
    assert parse_config(config_to_ini(cfgs)) == cfgs


@pytest.mark.parametrize("body, msg", [
    ("env = garnet\nalgorithm = rmc_sp\n", "c > 0"),
    ("env = garnet\nalgorithm = rmc_lr\nc = 0.3\n", "only used by rmc_sp"),
    ("env = inventory\nalgorithm = rmc_lr\n", "tabular"),
    ("env = garnet\nalgorithm = rmc_lr\nbogus = 1\n", "unknown key"),
    ("env = garnet\nalgorithm = rmc_lr\nn_cycles = 2.5\n", "integer"),
    ("env = garnet\nalgorithm = rmc_lr\nshared_run = maybe\n", "boolean"),
    ("env = garnet\nalgorithm = rmc_lr\ntheta0 = 40\n", "outside"),
    ("env = garnet\nalgorithm = dqn\n", "algorithm"),
    ("algorithm = rmc_lr\n", "missing"),
    ("env = inventory\nalgorithm = rmc_sp\nc = 1\nmode = average\n", "average"),
])
def test_config_errors(body, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config("[x]\n" + body)


def test_budget_form_and_empty_config():
    cfg = parse_config("[x]\nenv = garnet\nalgorithm = rmc_lr\nbudget = 2e6\n")[0]
    assert cfg.budget == 2_000_000
    with pytest.raises(ConfigError):
        parse_config("")


def test_fmt_round_trips_bits():
    rng = np.random.default_rng(0)
    for x in np.concatenate([rng.normal(size=200) * 10.0 ** rng.integers(-30, 30, 200),
                             [0.1, 1 / 3, math.pi, 1e-300]]):
        assert float(fmt(x)) == x
    assert fmt(3) == "3" and fmt(True) == "1" and fmt(math.nan) == "nan"


def test_run_writes_artifacts(tmp_path):
    cfg_path = write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "tiny_lr" / "iterations.csv")
    header = open(out / "tiny_lr" / "iterations.csv").readline().strip().split(",")
    assert header == BASE_COLUMNS + ["theta_norm", "theta_argmax"]
    assert {r["replication"] for r in rows} == {0, 1, 2}
    keys = [(r["replication"], r["iteration"]) for r in rows]
    assert keys == sorted(keys)
    summary = read_csv(out / "tiny_lr" / "summary.csv")
    assert summary[0]["n"] == 3 and summary[0]["iteration"] == 0
    manifest = json.loads((out / "tiny_lr" / "manifest.json").read_text())
    assert manifest["status"] == "ok" and len(manifest["replications"]) == 3
    assert manifest["config"]["algorithm"] == "rmc_lr"


def test_csv_round_trip_matches_memory(tmp_path):
    cfg = parse_config(SMALL)[0]
    run_experiment(cfg, tmp_path)
    rows = read_csv(tmp_path / "tiny_lr" / "iterations.csv")
    mem = [rec for r in range(cfg.replications)
           for rec in run_replication(cfg, r)["result"].records]
    assert len(rows) == len(mem)
    for row, rec in zip(rows, mem):
        assert row["J_hat"] == rec.J_hat and row["R_hat"] == rec.R_hat
        assert row["T_hat"] == rec.T_hat and row["J_eval"] == rec.J_eval
        assert row["theta_norm"] == float(np.linalg.norm(rec.theta))


def test_scalar_policy_columns_and_sidecar(tmp_path):
    text = ("[inv]\nenv = inventory\nalgorithm = rmc_sp\nc = 3\nn_cycles = 10\nrho = 0.5\n"
            "alpha = 0.25\ntheta0 = 10\nlo = 1.5\nhi = 100\nbudget = 20000\n"
            "replications = 2\ntheta_sidecar = true\n")
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, text)), "--out-dir", str(out)]) == 0
    header = open(out / "inv" / "iterations.csv").readline().strip().split(",")
    assert header == BASE_COLUMNS + ["theta_0"]
    side = read_csv(out / "inv" / "theta.csv")
    assert side[0]["theta_0"] == 10.0


def test_determinism_and_workers(tmp_path):
    cfg_path = write(tmp_path, SMALL)
    outs = []
    for i, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"o{i}"
        assert main(["run", str(cfg_path), "--out-dir", str(out), "--workers", workers]) == 0
        outs.append(out)
    for name in ("iterations.csv", "summary.csv"):
        ref = (outs[0] / "tiny_sp" / name).read_bytes()
        assert (outs[1] / "tiny_sp" / name).read_bytes() == ref
        assert (outs[2] / "tiny_sp" / name).read_bytes() == ref
    other = tmp_path / "seeded"
    main(["run", str(cfg_path), "--out-dir", str(other), "--seed", "2"])
    assert (other / "tiny_sp" / "iterations.csv").read_bytes() != \
        (outs[0] / "tiny_sp" / "iterations.csv").read_bytes()


def test_budget_zero_header_only(tmp_path):
    text = "[empty]\nenv = garnet\nalgorithm = rmc_lr\nbudget = 0\nreplications = 1\n"
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, text)), "--out-dir", str(out)]) == 0
    lines = (out / "empty" / "iterations.csv").read_text().splitlines()
    assert lines == [",".join(BASE_COLUMNS + ["theta_norm", "theta_argmax"])]


def test_env_var_output_root(tmp_path, monkeypatch):
    text = "[e]\nenv = garnet\nalgorithm = rmc_lr\nbudget = 0\n"
    monkeypatch.setenv("RENEWAL_RL_OUT", str(tmp_path / "envroot"))
    assert main(["run", str(write(tmp_path, text))]) == 0
    assert (tmp_path / "envroot" / "e" / "iterations.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path, "[x]\nenv = garnet\nalgorithm = rmc_sp\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert "c > 0" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", str(write(tmp_path, "[x\n", "broken.ini"))]) == 2
    assert main(["run", str(bad), "--workers", "0"]) == 2


def test_truncation_exit_code(tmp_path):
    P = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    TabularMDP(P, np.zeros((2, 1))).save(tmp_path / "trap.txt")
    text = (f"[trap]\nenv = tabular\nmdp_path = {tmp_path / 'trap.txt'}\n"
            "algorithm = rmc_lr\nmax_steps = 50\nbudget = 1000\n")
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, text)), "--out-dir", str(out)]) == 3
    manifest = json.loads((out / "trap" / "manifest.json").read_text())
    assert manifest["status"] == "truncated"
    assert manifest["replications"][0]["status"] == "truncated"
    assert (out / "trap" / "iterations.csv").exists()


def test_oracle_and_evaluate_commands(tmp_path):
    text = ("[g]\nenv = garnet\nn_states = 5\nn_actions = 2\nbranching = 3\n"
            "algorithm = value_iteration\neval_reps = 200\n"
            "[inv]\nenv = inventory\nalgorithm = rmc_sp\nc = 3\nrho = 0.5\n"
            "theta0 = 20\nlo = 1.5\nhi = 100\neval_reps = 200\n")
    p = write(tmp_path, text)
    out = tmp_path / "o"
    assert main(["oracle", str(p), "--out-dir", str(out)]) == 0
    vals = {r["quantity"]: r["value"] for r in read_csv(out / "inv" / "oracle.csv")}
    assert vals["approx_bound"] == pytest.approx(5.25)
    assert vals["theta_star"] == pytest.approx(21.56, abs=0.01)
    assert "J_star" in {r["quantity"] for r in read_csv(out / "g" / "oracle.csv")}
    assert main(["evaluate", str(p), "--out-dir", str(out)]) == 0
    ev = read_csv(out / "g" / "evaluate.csv")[0]
    assert abs(ev["mean"] - ev["reference"]) <= 4 * ev["stderr"] + 1e-9
    # running an oracle algorithm through `run` writes the oracle table too
    assert main(["run", str(p), "--out-dir", str(tmp_path / "r"), "--only", "g"]) == 0
    assert (tmp_path / "r" / "g" / "oracle.csv").exists()
    assert main(["run", str(p), "--only", "nope"]) == 2


def test_evaluate_policy_deterministic_env_has_zero_std():
    from conftest import gibbs, two_state_loop
    env = two_state_loop()
    mean, std = evaluate_policy(env, gibbs(env), 50, 7, 0.9, make_rng(0))
    assert std == 0.0
    assert mean == pytest.approx(sum(0.9 ** t * (1 + t % 2) for t in range(50)))


def test_evaluate_policy_horizon_tail_bound(small_garnet):
    from conftest import gibbs
    from renewal_rl.baselines import exact_policy_value
    pol = gibbs(small_garnet)
    J = exact_policy_value(small_garnet, pol, 0.9).J
    h = 60
    mean, std = evaluate_policy(small_garnet, pol, h, 20_000, 0.9, make_rng(1))
    tail = 0.9 ** h * np.abs(small_garnet.r).max() / 0.1
    assert abs(mean - J) <= tail + 3 * std / math.sqrt(20_000)


def test_build_helpers():
    cfg = parse_config(SMALL)[0]
    env = build_env(cfg)
    assert env.n_states == 5
    assert build_policy(cfg, env).dim == 10
