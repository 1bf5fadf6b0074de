"""JSON experiment configuration.

Root keys::

    experiment        "pretrain" | "error-analysis" | "sweep" | "online"
    env               "cartpole" | "pendulum" | "reacher2"
    planner           CemConfig fields
    skip              {"kind": ..., "n": ..., "c": ...}
    sweep             {"n": [...], "fsa_c": [...], "cb_c": [...]}
    runs_per_setting  evaluation runs per sweep cell
    seed              base seed
    output_dir        where CSVs and checkpoints go

Optional keys: model (ModelConfig fields), n_iterations, task_horizon,
train_model, checkpoint, pretrain_runs, workers.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .agent import AgentConfig, ModelConfig
from .errors import InvalidConfigError, MissingArtifactError
from .planner import CemConfig
from .skip import SkipPolicyConfig

EXPERIMENTS = ("pretrain", "error-analysis", "sweep", "online")

FULL_N_GRID = tuple(range(20))
FULL_FSA_GRID = (0.1, 0.15, 0.25, 0.35, 0.5, 0.75, 0.85, 0.9, 0.95, 0.99, 0.999)
FULL_CB_GRID = tuple(round(0.05 * i, 2) for i in range(41))


@dataclass(frozen=True)
class SweepGrid:
    # reduced defaults; the FULL_* grids above cover the complete study
    n: tuple = (0, 1, 2, 4, 9)
    fsa_c: tuple = (0.5, 0.9, 0.95)
    cb_c: tuple = (0.25, 0.5, 1.0, 1.5)

    def __post_init__(self):
        for name in ("n", "fsa_c", "cb_c"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "sweep"
    agent: AgentConfig = field(default_factory=AgentConfig)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    runs_per_setting: int = 10
    output_dir: str = "results"
    checkpoint: str = None
    pretrain_runs: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.runs_per_setting < 1:
            raise InvalidConfigError("runs_per_setting must be >= 1")
        if self.pretrain_runs < 1 or self.workers < 1:
            raise InvalidConfigError("pretrain_runs and workers must be >= 1")
        if self.experiment == "sweep" and not (self.sweep.n or self.sweep.fsa_c or self.sweep.cb_c):
            raise InvalidConfigError("sweep grid is empty")
        if self.experiment == "error-analysis" and not self.sweep.n:
            raise InvalidConfigError("error analysis needs at least one n value")

    @property
    def seed(self):
        return self.agent.seed

    @property
    def checkpoint_path(self):
        if self.checkpoint is not None:
            return Path(self.checkpoint)
        return Path(self.output_dir) / "model.aui"

    def with_overrides(self, out=None, seed=None):
        cfg = self
        if out is not None:
            cfg = replace(cfg, output_dir=str(out))
        if seed is not None:
            cfg = replace(cfg, agent=replace(cfg.agent, seed=int(seed)))
        return cfg


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidConfigError(f"bad {where}: {exc}") from None


_ROOT_KEYS = {
    "experiment", "env", "planner", "skip", "sweep", "runs_per_setting", "seed", "output_dir",
    "model", "n_iterations", "task_horizon", "train_model", "checkpoint", "pretrain_runs", "workers",
}


def config_from_dict(data):
    if not isinstance(data, dict):
        raise InvalidConfigError("config root must be a JSON object")
    unknown = set(data) - _ROOT_KEYS
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
    agent = AgentConfig(
        env=data.get("env", "cartpole"),
        planner=_build(CemConfig, data.get("planner"), "planner"),
        skip=_build(SkipPolicyConfig, data.get("skip"), "skip"),
        model=_build(ModelConfig, data.get("model"), "model"),
        n_iterations=int(data.get("n_iterations", 1)),
        train_model=bool(data.get("train_model", False)),
        seed=int(data.get("seed", 0)),
        task_horizon=data.get("task_horizon"),
    )
    # fail early on an unknown environment name or horizon
    agent.env_spec()
    return ExperimentConfig(
        experiment=data.get("experiment", "sweep"),
        agent=agent,
        sweep=_build(SweepGrid, data.get("sweep"), "sweep"),
        runs_per_setting=int(data.get("runs_per_setting", 10)),
        output_dir=str(data.get("output_dir", "results")),
        checkpoint=data.get("checkpoint"),
        pretrain_runs=int(data.get("pretrain_runs", 5)),
        workers=int(data.get("workers", 1)),
    )


def config_to_dict(cfg):
    a = cfg.agent
    out = {
        "experiment": cfg.experiment,
        "env": a.env,
        "planner": asdict(a.planner),
        "skip": asdict(a.skip),
        "sweep": {k: list(v) for k, v in asdict(cfg.sweep).items()},
        "runs_per_setting": cfg.runs_per_setting,
        "seed": a.seed,
        "output_dir": cfg.output_dir,
        "model": asdict(a.model),
        "n_iterations": a.n_iterations,
        "train_model": a.train_model,
        "pretrain_runs": cfg.pretrain_runs,
        "workers": cfg.workers,
    }
    if a.task_horizon is not None:
        out["task_horizon"] = a.task_horizon
    if cfg.checkpoint is not None:
        out["checkpoint"] = cfg.checkpoint
    return out


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"no config file at {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
