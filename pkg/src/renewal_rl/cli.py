"""Command-line experiment runner.

    renewal-rl run configs/inventory.ini --seed 3 --workers 4 --out-dir runs/
    renewal-rl evaluate configs/inventory.ini
    renewal-rl oracle configs/garnet.ini

Each config section is one experiment and writes into ``<out>/<experiment>/``:
``iterations.csv`` (long format, one row per recorded iteration and
replication), ``summary.csv`` (mean and std across replications per
checkpoint) and ``manifest.json`` (resolved config, seeds, status).

Exit codes: 0 success, 2 config error, 3 a replication hit cycle truncation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .baselines import (ActorCriticConfig, average_reward, discounted_returns,
                        event_trigger_value, exact_policy_value, grid_search_threshold,
                        horizon_for, sarsa_lambda_run, value_iteration)
from .config import ConfigError, ExperimentConfig, load_config
from .envs import (EventTriggerModel, InventoryModel, TabularMDP, garnet_generate,
                   inventory_optimal_threshold, inventory_value)
from .mdp_core import BaseStock, GibbsTabular, PolicyParams, Threshold, make_rng
from .renewal import TruncationError
from .rmc import RmcConfig, RmcRunResult, approx_bound, rmc_run_lr, rmc_run_sp

log = logging.getLogger("renewal_rl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRUNCATED = 3
OUT_ENV = "RENEWAL_RL_OUT"
BASE_COLUMNS = ["experiment", "algorithm", "replication", "iteration", "samples",
                "J_hat", "R_hat", "T_hat", "J_eval"]


def fmt(x) -> str:
    """Render a value for CSV; floats keep 17 significant digits (bit-exact round trip)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# ---------------------------------------------------------------- building blocks

def build_env(cfg: ExperimentConfig):
    if cfg.env == "garnet":
        env = garnet_generate(cfg.n_states, cfg.n_actions, cfg.branching, cfg.reward_prob,
                              (cfg.reward_lo, cfg.reward_hi), seed=cfg.env_seed)
    elif cfg.env == "tabular":
        try:
            env = TabularMDP.load(cfg.mdp_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[{cfg.name}] cannot load {cfg.mdp_path}: {exc}") from None
    elif cfg.env == "event_trigger":
        s0 = 0.0 if cfg.start_state is None else cfg.start_state
        return EventTriggerModel(cfg.ar_alpha, cfg.lambda_comm, cfg.p_d, cfg.gamma, s0)
    else:
        s0 = 1.0 if cfg.start_state is None else cfg.start_state
        return InventoryModel(cfg.a_p, cfg.a_h, cfg.a_b, cfg.demand_rate, cfg.gamma,
                              (cfg.clip_lo, cfg.clip_hi), s0)
    if cfg.start_state is not None:
        env = TabularMDP(env.P, env.r, int(cfg.start_state), env.branching, env.seed)
    return env


def build_policy(cfg: ExperimentConfig, env) -> PolicyParams:
    if isinstance(env, TabularMDP):
        fam = GibbsTabular(env.n_states, env.n_actions, cfg.temperature)
    elif isinstance(env, EventTriggerModel):
        fam = Threshold()
    else:
        fam = BaseStock()
    return PolicyParams(np.full(fam.dim, cfg.theta0), fam, cfg.lo, cfg.hi)


def evaluate_policy(env, policy: PolicyParams, horizon: int, reps: int, gamma: float,
                    rng) -> tuple:
    """Mean and standard deviation of truncated discounted returns from the start state."""
    ret = discounted_returns(env, policy, horizon, reps, gamma, rng)
    # exact arithmetic: identical returns give exactly zero spread
    return float(ret.mean()), statistics.pstdev(ret.tolist())


def replication_seed(master: int, replication: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=(7, int(replication)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def make_evaluator(cfg: ExperimentConfig, env, policy0: PolicyParams, seed: int):
    """Callable ``theta -> performance`` used for checkpoints, or None."""
    kind = cfg.evaluator
    if kind == "none":
        return None
    if kind in ("auto", "exact"):
        if isinstance(env, TabularMDP):
            if cfg.mode == "average":
                return lambda th: average_reward(env, policy0.with_theta(th))
            return lambda th: exact_policy_value(env, policy0.with_theta(th), cfg.gamma).J
        if isinstance(env, EventTriggerModel):
            return lambda th: event_trigger_value(float(th[0]), env)
        if isinstance(env, InventoryModel) and cfg.lo >= env.start_state:
            return lambda th: -inventory_value(float(th[0]), env)
        if kind == "exact":
            raise ConfigError(f"[{cfg.name}] no exact evaluator for this setup")
    counter = iter(range(1 << 62))

    def mc(th):
        rng = make_rng(seed, 3, next(counter))
        return evaluate_policy(env, policy0.with_theta(th), cfg.eval_horizon,
                               cfg.eval_reps, cfg.gamma, rng)[0]
    return mc


def rmc_config(cfg: ExperimentConfig, evaluating: bool) -> RmcConfig:
    eval_every = (cfg.eval_every or cfg.record_every) if evaluating else 0
    return RmcConfig(n_cycles=cfg.n_cycles, gamma=cfg.gamma, mode=cfg.mode,
                     budget=cfg.budget, max_iterations=cfg.max_iterations,
                     biased=cfg.biased, shared_run=cfg.shared_run, c=cfg.c,
                     perturbation=cfg.perturbation, optimizer=cfg.optimizer,
                     alpha=cfg.alpha, beta1=cfg.beta1, beta2=cfg.beta2,
                     epsilon=cfg.epsilon, rho=cfg.rho, max_steps=cfg.max_steps,
                     record_every=cfg.record_every, eval_every=eval_every)


def run_replication(cfg: ExperimentConfig, replication: int) -> dict:
    """One independent run; picklable so replications can go to worker processes."""
    seed = replication_seed(cfg.seed, replication)
    env = build_env(cfg)
    policy0 = build_policy(cfg, env)
    evaluator = make_evaluator(cfg, env, policy0, seed)
    out = dict(replication=replication, seed=seed, status="ok", message="")
    try:
        if cfg.algorithm == "sarsa_lambda":
            ac = ActorCriticConfig(lam=cfg.lam, gamma=cfg.gamma, alpha=cfg.alpha,
                                   critic_lr=cfg.critic_lr, beta1=cfg.beta1,
                                   beta2=cfg.beta2, epsilon=cfg.epsilon,
                                   budget=cfg.budget, record_every=cfg.record_every)
            result = sarsa_lambda_run(env, policy0, ac, seed=seed, evaluator=evaluator)
        else:
            run = rmc_run_sp if cfg.algorithm == "rmc_sp" else rmc_run_lr
            result = run(env, policy0, rmc_config(cfg, evaluator is not None), seed=seed,
                         evaluator=evaluator)
    except TruncationError as exc:
        result = exc.partial if isinstance(exc.partial, RmcRunResult) else RmcRunResult()
        out.update(status="truncated", message=str(exc))
    out["result"] = result
    return out


def _theta_header(cfg: ExperimentConfig, dim: int) -> List[str]:
    if cfg.tabular:
        return ["theta_norm", "theta_argmax"]
    return [f"theta_{i}" for i in range(dim)]


def _theta_cells(theta, n_actions: Optional[int]) -> list:
    if n_actions:
        table = np.asarray(theta).reshape(-1, n_actions)
        return [float(np.linalg.norm(theta)), ";".join(str(int(a)) for a in table.argmax(axis=1))]
    return [float(t) for t in theta]


def iteration_rows(cfg: ExperimentConfig, replication: int, result: RmcRunResult,
                   n_actions: Optional[int] = None) -> list:
    """CSV rows for one replication; ``n_actions`` is set for tabular policies."""
    rows = []
    for rec in result.records:
        rows.append([cfg.name, cfg.algorithm, replication, rec.iteration, rec.samples,
                     rec.J_hat, rec.R_hat, rec.T_hat, rec.J_eval]
                    + _theta_cells(rec.theta, n_actions))
    return rows


def _stats(values) -> tuple:
    a = np.asarray(values, dtype=float)
    if a.size == 0 or np.all(np.isnan(a)):
        return math.nan, math.nan
    mean = float(np.mean(a))
    std = float(np.std(a, ddof=1)) if a.size > 1 else math.nan
    return mean, std


def summary_rows(cfg: ExperimentConfig, runs: list, dim: int) -> tuple:
    """Per-checkpoint mean and std across replications, keyed by iteration index."""
    by_iter = {}
    for run in runs:
        for rec in run["result"].records:
            by_iter.setdefault(rec.iteration, []).append(rec)
    theta_cols = ["theta_norm"] if cfg.tabular else [f"theta_{i}" for i in range(dim)]
    header = ["experiment", "algorithm", "iteration", "n", "samples_mean"]
    for col in ["J_hat", "J_eval"] + theta_cols:
        header += [f"{col}_mean", f"{col}_std"]
    rows = []
    for it in sorted(by_iter):
        recs = by_iter[it]
        row = [cfg.name, cfg.algorithm, it, len(recs),
               float(np.mean([r.samples for r in recs]))]
        row += _stats([r.J_hat for r in recs]) + _stats([r.J_eval for r in recs])
        if cfg.tabular:
            row += _stats([np.linalg.norm(r.theta) for r in recs])
        else:
            for i in range(dim):
                row += _stats([r.theta[i] for r in recs])
        rows.append(row)
    return header, rows


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_csv(path) -> list:
    """Rows of an emitted CSV as dicts; numeric cells parsed back to int/float."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = int(v)
                except ValueError:
                    try:
                        parsed[k] = float(v)
                    except ValueError:
                        parsed[k] = v
            out.append(parsed)
    return out


def write_manifest(path: Path, cfg: ExperimentConfig, command: str, extra: dict) -> None:
    doc = dict(command=command, version=__version__, config=cfg.to_dict(), **extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _exp_dir(out_root: Path, cfg: ExperimentConfig) -> Path:
    d = Path(out_root) / cfg.name
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- commands

def run_experiment(cfg: ExperimentConfig, out_root, workers: int = 1) -> int:
    """Run all replications of one experiment and write its artifacts. Returns an exit code."""
    if cfg.algorithm in ("value_iteration", "grid_search"):
        return oracle_experiment(cfg, out_root)
    out = _exp_dir(out_root, cfg)
    reps = range(cfg.replications)
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run_replication, [cfg] * cfg.replications, reps))
    else:
        runs = [run_replication(cfg, r) for r in reps]
    runs.sort(key=lambda r: r["replication"])
    env = build_env(cfg)
    dim = build_policy(cfg, env).dim
    n_actions = env.n_actions if cfg.tabular else None
    rows = [row for run in runs
            for row in iteration_rows(cfg, run["replication"], run["result"], n_actions)]
    write_csv(out / "iterations.csv", BASE_COLUMNS + _theta_header(cfg, dim), rows)
    header, srows = summary_rows(cfg, runs, dim)
    write_csv(out / "summary.csv", header, srows)
    if cfg.theta_sidecar:
        side = [[run["replication"], rec.iteration] + [float(t) for t in rec.theta]
                for run in runs for rec in run["result"].records]
        write_csv(out / "theta.csv", ["replication", "iteration"]
                  + [f"theta_{i}" for i in range(dim)], side)
    truncated = [r for r in runs if r["status"] != "ok"]
    replications = [dict(replication=r["replication"], seed=r["seed"], status=r["status"],
                         message=r["message"], samples=r["result"].samples,
                         iterations=r["result"].iterations) for r in runs]
    write_manifest(out / "manifest.json", cfg, "run",
                   dict(status="truncated" if truncated else "ok",
                        master_seed=cfg.seed, replications=replications))
    for r in runs:
        res = r["result"]
        if res.records:
            last = res.records[-1]
            log.info("%s rep %d: %d samples, J_hat %.6g, J_eval %.6g%s", cfg.name,
                     r["replication"], res.samples, last.J_hat, last.J_eval,
                     "" if r["status"] == "ok" else " [TRUNCATED]")
    return EXIT_TRUNCATED if truncated else EXIT_OK


def evaluate_experiment(cfg: ExperimentConfig, out_root) -> int:
    """Monte Carlo evaluation of the configured initial policy, with an exact reference."""
    env = build_env(cfg)
    policy = build_policy(cfg, env)
    rng = make_rng(cfg.seed, 4)
    mean, std = evaluate_policy(env, policy, cfg.eval_horizon, cfg.eval_reps, cfg.gamma, rng)
    reference = math.nan
    ev = make_evaluator(cfg.__class__(**{**cfg.to_dict(), "evaluator": "auto"}),
                        env, policy, cfg.seed)
    if ev is not None and cfg.mode == "discounted" and not (
            isinstance(env, InventoryModel) and cfg.lo < env.start_state):
        reference = float(ev(policy.theta))
    out = _exp_dir(out_root, cfg)
    write_csv(out / "evaluate.csv",
              ["experiment", "horizon", "reps", "mean", "std", "stderr", "reference"],
              [[cfg.name, cfg.eval_horizon, cfg.eval_reps, mean, std,
                std / math.sqrt(cfg.eval_reps), reference]])
    write_manifest(out / "evaluate_manifest.json", cfg, "evaluate", dict(status="ok"))
    print(f"{cfg.name}: mean {mean:.6g} std {std:.6g} reference {reference:.6g}")
    return EXIT_OK


def oracle_values(cfg: ExperimentConfig) -> list:
    """(quantity, value) pairs from the exact or search-based oracle for ``cfg``'s environment."""
    env = build_env(cfg)
    if isinstance(env, TabularMDP):
        policy0 = build_policy(cfg, env)
        if cfg.mode == "average":
            return [("average_reward_theta0", average_reward(env, policy0))]
        sol = value_iteration(env, cfg.gamma, cfg.vi_tol)
        return [("J_star", sol.J_star), ("iterations", sol.iterations),
                ("residual", sol.residual),
                ("greedy_policy", ";".join(str(int(a)) for a in sol.greedy_policy))]
    grid = np.round(np.arange(cfg.grid_lo, cfg.grid_hi + cfg.grid_step / 2, cfg.grid_step), 10)
    if isinstance(env, EventTriggerModel):
        res = grid_search_threshold(env, grid, horizon_for(cfg.gamma), cfg.grid_reps,
                                    make_rng(cfg.seed, 5))
        quad = np.array([event_trigger_value(t, env) for t in grid])
        k = int(np.argmax(quad))
        return [("theta_grid", res.theta_best), ("J_grid", float(res.J[res.best_index])),
                ("J_grid_stderr", float(res.stderr[res.best_index])),
                ("theta_quadrature", float(grid[k])), ("J_quadrature", float(quad[k]))]
    theta_star = inventory_optimal_threshold(env)
    return [("theta_star", theta_star), ("cost_star", inventory_value(theta_star, env)),
            ("lipschitz", env.lipschitz),
            ("approx_bound", approx_bound(env.lipschitz, cfg.rho, cfg.gamma))]


def oracle_experiment(cfg: ExperimentConfig, out_root) -> int:
    vals = oracle_values(cfg)
    out = _exp_dir(out_root, cfg)
    write_csv(out / "oracle.csv", ["experiment", "quantity", "value"],
              [[cfg.name, q, v] for q, v in vals])
    write_manifest(out / "oracle_manifest.json", cfg, "oracle", dict(status="ok"))
    print(f"{cfg.name}: " + ", ".join(f"{q}={fmt(v)}" for q, v in vals))
    return EXIT_OK


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renewal-rl", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the learners of every experiment"),
                        ("evaluate", "Monte Carlo evaluation of the initial policy"),
                        ("oracle", "value iteration, grid search and closed forms")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="INI file, one section per experiment")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--workers", type=int, default=1,
                        help="processes for independent replications")
        sp.add_argument("--out-dir", default=None,
                        help=f"output root (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--only", action="append", default=None,
                        help="run only the named experiment (repeatable)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        configs = load_config(args.config, seed=args.seed)
        if args.only:
            missing = set(args.only) - {c.name for c in configs}
            if missing:
                raise ConfigError(f"no experiment named {sorted(missing)}")
            configs = [c for c in configs if c.name in args.only]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_root = Path(args.out_dir) if args.out_dir else default_out_root()
    status = EXIT_OK
    for cfg in configs:
        try:
            if args.command == "run":
                code = run_experiment(cfg, out_root, args.workers)
            elif args.command == "evaluate":
                code = evaluate_experiment(cfg, out_root)
            else:
                code = oracle_experiment(cfg, out_root)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if code == EXIT_TRUNCATED:
            print(f"{cfg.name}: cycle truncation, partial results flagged in manifest",
                  file=sys.stderr)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
