"""Experiment configuration: JSON files mapped onto nested dataclasses.

A config file is a JSON object with ``"config_version": 1``.  Every section
is optional and falls back to the defaults below; unknown keys are rejected
so typos fail loudly.  See ``README.md`` for the full schema.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from ..bank import BankConfig
from ..learners import LambdaSchedule, LearnerConfig
from ..model import NcConfig, config_from_dict, config_to_dict

CONFIG_VERSION = 1

# desk-scale regression NC; the library class defaults are the larger reference dims
DEFAULT_NC = {"model_dim": 64, "value_layers": 2, "self_attention_layers": 1}


@dataclass
class TaskConfig:
    kind: str = "sinusoid"
    m: int = 10
    m_test: int = 15
    zero_labels: bool = False
    # classification-only
    num_classes: int = 5
    input_dim: int = 8
    sigma: float = 0.3

    def __post_init__(self):
        if self.kind not in ("sinusoid", "classification"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.m < 1 or self.m_test < 1:
            raise ValueError("m and m_test must be >= 1")


@dataclass
class MetaOptimizerConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    steps_per_episode: float = 1.5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.steps_per_episode < 0:
            raise ValueError("invalid meta-optimizer settings")


@dataclass
class BudgetConfig:
    episodes: int = 10_000
    tasks_per_round: int = 32
    snapshot_every: int = 1
    checkpoint_every: int = 2000

    def __post_init__(self):
        if self.episodes < 0 or self.tasks_per_round < 1 or self.snapshot_every < 1:
            raise ValueError("invalid budget settings")


@dataclass
class EvalConfig:
    heldout_tasks: int = 200
    lam: float = 1.0
    seed_offset: int = 1_000_003


@dataclass
class ComparisonConfig:
    tasks: int = 200
    eval_steps: tuple = (1, 2, 4, 8, 16)
    penalty_weights: tuple = (1.0, 0.1, 0.01)


@dataclass
class OodConfig:
    tasks: int = 100
    activations: tuple = ("relu", "tanh", "sigmoid")
    learning_rates: tuple = (0.1, 0.01, 0.001)
    widths: tuple = (10, 40, 160)
    depths: tuple = (1, 2, 4)
    closed_form: tuple = ("nearest_neighbor", "constant")
    l2_weight: float = 0.01


@dataclass
class SingleTaskConfig:
    dataset: str | None = None
    num_classes: int = 2
    generate_points: int = 5000
    input_dim: int = 20
    separation: float = 1.5
    train_size: int = 500
    subtask_train: int = 50
    subtask_val: int = 50
    subtask_steps: int = 40
    snapshot_every: int = 4
    episodes: int = 1024
    tasks_per_round: int = 32
    width: int = 40
    depth: int = 2
    learning_rate: float = 0.1
    model_dim: int = 32
    minibatch: int = 50
    final_steps: int = 400
    eval_every: int = 20
    clip_floor: float = -0.1


@dataclass
class BoundConfig:
    epsilon: float | None = None
    delta: float = 0.05
    target: float | None = 0.8
    tasks: int = 1000


@dataclass
class ExperimentConfig:
    name: str = "sinusoid"
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    nc: NcConfig = field(default_factory=lambda: config_from_dict(DEFAULT_NC))
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    meta_optimizer: MetaOptimizerConfig = field(default_factory=MetaOptimizerConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    comparison: ComparisonConfig = field(default_factory=ComparisonConfig)
    ood: OodConfig = field(default_factory=OodConfig)
    single_task: SingleTaskConfig = field(default_factory=SingleTaskConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)
    checkpoint: str | None = None
    # NC estimates below this floor stop rewarding the learner; None disables
    clip_floor: float | None = -0.1

    def to_dict(self) -> dict:
        out = {"config_version": CONFIG_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "nc":
                v = config_to_dict(v)
            elif is_dataclass(v):
                v = asdict(v)
            out[f.name] = _jsonable(v)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {
    "task": TaskConfig,
    "learner": LearnerConfig,
    "lambda_schedule": LambdaSchedule,
    "meta_optimizer": MetaOptimizerConfig,
    "bank": BankConfig,
    "budget": BudgetConfig,
    "eval": EvalConfig,
    "comparison": ComparisonConfig,
    "ood": OodConfig,
    "single_task": SingleTaskConfig,
    "bound": BoundConfig,
}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _build(cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return cls(**kwargs)


def config_from_mapping(data: dict) -> ExperimentConfig:
    data = dict(data)
    version = data.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config_version {version}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value)
        elif key == "nc":
            base = dict(DEFAULT_NC) if value.get("kind", "regression") == "regression" else {}
            base.update(value)
            kwargs[key] = config_from_dict(base)
        elif key in ("name", "seed", "checkpoint", "clip_floor"):
            kwargs[key] = value
        else:
            raise ValueError(f"unknown config section {key!r}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_mapping(json.load(fh))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(cfg.dumps() + "\n")
