"""Run configuration: one YAML file with command-scoped sections.

Unknown keys are rejected.  Command-line ``--set section.key=value``
overrides and the global ``--seed`` flag are applied after loading.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .constraints import SpecRanges
from .models import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _from_dict(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(f.type) or f.name in ("spec_ranges",):
            value = _from_dict(SpecRanges, value, f"{section}.{f.name}")
        kwargs[f.name] = value
    return cls(**kwargs)


@dataclass
class EnvSection:
    width: int = 12
    height: int = 12
    entity_counts: dict = field(default_factory=lambda: {"lava": 3, "water": 3, "grass": 3})
    reward_objects: dict = field(default_factory=lambda: {"key": 1, "ball": 1, "box": 1})
    horizon: int = 60
    layout_mode: str = "scatter"

    def grid_config(self):
        from .gridworld import GridConfig

        return GridConfig(
            width=self.width,
            height=self.height,
            entity_counts=dict(self.entity_counts),
            reward_objects=dict(self.reward_objects),
            horizon=self.horizon,
            layout_mode=self.layout_mode,
        )


@dataclass
class CorpusSection:
    n_episodes: int = 1200
    n_specs_per_family: int = 25
    families: list = field(default_factory=lambda: ["quantitative", "sequential", "mathematical"])
    train_frac: float = 0.8
    max_pairs: int = 0  # 0 = keep all
    spec_ranges: SpecRanges = field(default_factory=SpecRanges)
    path: str = "corpus.jsonl"


@dataclass
class TtctSection:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_text_len: int = 64
    max_traj_len: int = 220
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 3e-4
    target_norm: str = "softmax"
    checkpoint_dir: str = "checkpoints"
    metrics_path: str = "ttct_metrics.jsonl"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            max_text_len=self.max_text_len,
            max_traj_len=self.max_traj_len,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=seed,
            target_norm=self.target_norm,
        )


@dataclass
class CalibrateSection:
    n_negatives: int = 0  # 0 = as many as positives
    per_family: bool = False  # additionally report per-family thresholds
    report_path: str = "calibration.json"
    roc_plot: str = "roc.png"


@dataclass
class RlSection:
    mode: str = "GC"
    cost_limit: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    lambda_lr: float = 0.05
    update_epochs: int = 4
    minibatch_size: int = 256
    rollout_steps: int = 256
    n_parallel_envs: int = 8
    iterations: int = 50
    adapter_rank: int = 4
    adapter_lr: float = 1e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    families: list = field(default_factory=lambda: ["quantitative", "sequential", "mathematical"])
    spec_ranges: SpecRanges = field(default_factory=SpecRanges)
    seeds: list = field(default_factory=lambda: [0])
    out_subdir: str = "rl"

    def safe_rl_config(self, seed: int):
        from .safe_rl import SafeRLConfig

        return SafeRLConfig(
            mode=self.mode,
            cost_limit=float(self.cost_limit),
            gamma=self.gamma,
            gae_lambda=self.gae_lambda,
            clip=self.clip,
            learning_rate=self.learning_rate,
            lambda_lr=self.lambda_lr,
            update_epochs=self.update_epochs,
            minibatch_size=self.minibatch_size,
            rollout_steps=self.rollout_steps,
            n_parallel_envs=self.n_parallel_envs,
            iterations=self.iterations,
            adapter_rank=self.adapter_rank,
            adapter_lr=self.adapter_lr,
            entropy_coef=self.entropy_coef,
            value_coef=self.value_coef,
            seed=seed,
            families=tuple(self.families),
            spec_ranges=self.spec_ranges,
        )


@dataclass
class EvalSection:
    zero_shot_episodes: int = 300
    zero_shot_horizon: int = 60
    n_heatmap_episodes: int = 3
    pareto_inputs: list = field(default_factory=list)  # policy metrics files
    out_subdir: str = "eval"


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint: str = ""  # alignment checkpoint used by calibrate/rl/eval
    env: EnvSection = field(default_factory=EnvSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    ttct: TtctSection = field(default_factory=TtctSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    rl: RlSection = field(default_factory=RlSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTIONS = {
    "env": EnvSection,
    "corpus": CorpusSection,
    "ttct": TtctSection,
    "calibrate": CalibrateSection,
    "rl": RlSection,
    "eval": EvalSection,
}


def load_config(path) -> RunConfig:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = RunConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            setattr(cfg, key, _from_dict(_SECTIONS[key], value or {}, key))
        elif key in ("seed", "out_dir", "checkpoint"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    return cfg


def apply_override(cfg: RunConfig, assignment: str) -> None:
    """Apply one 'section.key=value' (or 'key=value') override in place."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.split(".")
    target = cfg
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ConfigError(f"unknown config path {key!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config path {key!r}")
    setattr(target, leaf, value)


def resolve_out_dir(cfg: RunConfig, env_root: str | None) -> Path:
    out = Path(cfg.out_dir)
    if env_root and not out.is_absolute():
        out = Path(env_root) / out
    return out
