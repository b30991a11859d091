"""Experiment configuration: flat ``key = value`` sections, one per experiment.

Example::

    [inventory]
    env = inventory
    algorithm = rmc_sp
    c = 3.0
    n_cycles = 100
    alpha = 0.25
    rho = 0.5
    theta0 = 10
    lo = 1.5
    hi = 100
    replications = 20
    budget = 3000000

Unknown keys are rejected so typos fail loudly before any simulation starts.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional

ENVS = ("garnet", "tabular", "event_trigger", "inventory")
TABULAR_ENVS = ("garnet", "tabular")
ALGORITHMS = ("rmc_lr", "rmc_lr_biased", "rmc_sp", "sarsa_lambda",
              "value_iteration", "grid_search")
LEARNERS = ("rmc_lr", "rmc_lr_biased", "rmc_sp", "sarsa_lambda")
EVALUATORS = ("auto", "exact", "mc", "none")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env: str
    algorithm: str

    # environment
    n_states: int = 20
    n_actions: int = 5
    branching: int = 10
    reward_prob: float = 0.05
    reward_lo: float = 10.0
    reward_hi: float = 100.0
    env_seed: int = 0
    mdp_path: str = ""
    start_state: Optional[float] = None
    ar_alpha: float = 1.0
    lambda_comm: float = 500.0
    p_d: float = 0.0
    a_p: float = 1.5
    a_h: float = 1.0
    a_b: float = 1.0
    demand_rate: float = 0.025
    clip_lo: float = -100.0
    clip_hi: float = 100.0

    # learner
    gamma: float = 0.9
    mode: str = "discounted"
    n_cycles: int = 5
    shared_run: bool = False
    c: Optional[float] = None
    perturbation: str = "normal"
    optimizer: str = "adam"
    alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    temperature: float = 1.0
    theta0: float = 0.0
    lo: float = -30.0
    hi: float = 30.0
    rho: float = 0.0
    max_steps: int = 100_000
    lam: float = 0.0
    critic_lr: float = 0.1

    # run
    seed: int = 0
    replications: int = 1
    budget: int = 1_000_000
    max_iterations: Optional[int] = None
    record_every: int = 1
    evaluator: str = "auto"
    eval_every: int = 0
    eval_horizon: int = 250
    eval_reps: int = 100
    theta_sidecar: bool = False

    # oracles
    grid_lo: float = 0.0
    grid_hi: float = 30.0
    grid_step: float = 0.1
    grid_reps: int = 10_000
    vi_tol: float = 1e-10

    @property
    def tabular(self) -> bool:
        return self.env in TABULAR_ENVS

    @property
    def biased(self) -> bool:
        return self.algorithm == "rmc_lr_biased"

    def validate(self) -> "ExperimentConfig":
        errs = _problems(self)
        if errs:
            raise ConfigError(f"[{self.name}] " + "; ".join(errs))
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _problems(cfg: ExperimentConfig) -> List[str]:
    errs = []
    if cfg.env not in ENVS:
        errs.append(f"env must be one of {ENVS}, got {cfg.env!r}")
    if cfg.algorithm not in ALGORITHMS:
        errs.append(f"algorithm must be one of {ALGORITHMS}, got {cfg.algorithm!r}")
    if errs:
        return errs
    if cfg.algorithm == "rmc_sp":
        if cfg.c is None or not cfg.c > 0:
            errs.append("rmc_sp needs c > 0")
    elif cfg.c is not None:
        errs.append(f"c is only used by rmc_sp, not {cfg.algorithm}")
    if cfg.algorithm in ("rmc_lr", "rmc_lr_biased", "sarsa_lambda", "value_iteration") \
            and not cfg.tabular:
        errs.append(f"{cfg.algorithm} needs a tabular environment")
    if cfg.algorithm == "grid_search" and cfg.tabular:
        errs.append("grid_search needs a threshold environment")
    if cfg.env == "tabular" and not cfg.mdp_path:
        errs.append("env = tabular needs mdp_path")
    if cfg.mode not in ("discounted", "average"):
        errs.append(f"mode must be discounted or average, got {cfg.mode!r}")
    if cfg.mode == "average" and not cfg.tabular:
        errs.append("average mode is only supported on tabular environments")
    if cfg.mode == "average" and cfg.algorithm not in ("rmc_lr", "rmc_lr_biased", "rmc_sp"):
        errs.append("average mode needs an RMC algorithm")
    if not 0.0 < cfg.gamma < 1.0 and cfg.mode == "discounted":
        errs.append("gamma must lie in (0, 1)")
    if cfg.perturbation not in ("normal", "rademacher"):
        errs.append("perturbation must be normal or rademacher")
    if cfg.optimizer not in ("adam", "plain_sgd"):
        errs.append("optimizer must be adam or plain_sgd")
    if cfg.lo > cfg.hi:
        errs.append("lo exceeds hi")
    elif not cfg.lo <= cfg.theta0 <= cfg.hi:
        errs.append("theta0 lies outside [lo, hi]")
    if cfg.evaluator not in EVALUATORS:
        errs.append(f"evaluator must be one of {EVALUATORS}")
    for key in ("n_cycles", "replications", "record_every", "eval_horizon", "eval_reps",
                "max_steps", "grid_reps", "n_states", "n_actions", "branching"):
        if getattr(cfg, key) < 1:
            errs.append(f"{key} must be at least 1")
    for key in ("budget", "eval_every", "rho", "alpha", "seed", "env_seed"):
        if getattr(cfg, key) < 0:
            errs.append(f"{key} must be nonnegative")
    if cfg.branching > cfg.n_states:
        errs.append("branching exceeds n_states")
    if not 0.0 <= cfg.p_d <= 1.0:
        errs.append("p_d must lie in [0, 1]")
    if not 0.0 <= cfg.lam <= 1.0:
        errs.append("lam must lie in [0, 1]")
    if cfg.temperature <= 0:
        errs.append("temperature must be positive")
    if cfg.grid_step <= 0 or cfg.grid_hi < cfg.grid_lo:
        errs.append("grid needs grid_step > 0 and grid_lo <= grid_hi")
    if cfg.tabular and cfg.rho != 0:
        errs.append("approximate renewal is not defined for tabular environments")
    return errs


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key, raw: str):
    typ = _FIELDS[key].type
    raw = raw.strip()
    if "Optional" in typ:
        if raw.lower() in ("", "none"):
            return None
        typ = typ[len("Optional["):-1]
    if typ == "str":
        return raw
    if typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ == "int":
        try:
            return int(raw)
        except ValueError:
            val = float(raw)  # allow 2e6
        if not val.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(val)
    val = float(raw)
    if math.isnan(val):
        raise ValueError("NaN is not a valid setting")
    return val


def section_to_config(name: str, items, **overrides) -> ExperimentConfig:
    kw = {}
    for key, raw in items:
        if key == "name" or key not in _FIELDS:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            kw[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    for req in ("env", "algorithm"):
        if req not in kw:
            raise ConfigError(f"[{name}] missing required key {req!r}")
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(name=name, **kw).validate()


def parse_config(text: str, **overrides) -> List[ExperimentConfig]:
    """All experiments in an INI text; ``overrides`` (e.g. ``seed``) win over the file."""
    parser = configparser.ConfigParser(interpolation=None, default_section="defaults")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    defaults = dict(parser.defaults())
    out = []
    for name in parser.sections():
        items = {**defaults, **{k: v for k, v in parser.items(name, raw=True)}}
        out.append(section_to_config(name, items.items(), **overrides))
    if not out:
        raise ConfigError("config has no experiment sections")
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate experiment names")
    return out


def load_config(path, **overrides) -> List[ExperimentConfig]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)


def config_to_ini(configs) -> str:
    """Render configs back to INI; ``parse_config`` of the result round-trips."""
    parser = configparser.ConfigParser(interpolation=None)
    for cfg in configs:
        sec = {}
        for key, val in cfg.to_dict().items():
            if key == "name" or val is None:
                continue
            sec[key] = repr(val) if isinstance(val, float) else str(val)
        parser[cfg.name] = sec
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
