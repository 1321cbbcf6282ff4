"""Experiment configuration: one flat JSON document, every field defaulted.

CLI flags override file values; the resolved config is echoed into each
run's manifest so experiments are diffable and re-runnable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from studysim.errors import ConfigError
from studysim.factorization import Hyperparams
from studysim.forest import ForestConfig
from studysim.policies import AgentConfig
from studysim.simulation import RewardConfig


@dataclass
class ExperimentConfig:
    out_dir: str = "runs/default"
    log_path: str = ""  # empty: <out_dir>/events.csv
    seed: int = 0
    strict: bool = True
    window: int = 10

    synth_users: int = 500
    synth_exercises: int = 200
    synth_workbooks: int = 10
    synth_max_events: int = 100
    synth_order_policy: str = "random"
    synth_dropout_intercept: float = -6.0
    synth_dropout_per_failure: float = 1.8
    synth_dropout_per_easy_success: float = 0.5

    mf_factors: int = 16
    mf_reg_user: float = 0.01
    mf_reg_exercise: float = 0.01
    mf_learning_rate: float = 0.01
    mf_steps_per_interaction: int = 5
    mf_init_scale: float = 0.1
    mf_epochs: int = 3

    forest_trees: int = 100
    forest_min_samples_leaf: int = 2
    forest_max_depth: int | None = None
    forest_features_per_split: int | None = None

    reward_target: float = 0.7
    reward_retention_weight: float = 1.0
    reward_sign_mode: str = "deviation-penalty"

    agent_iterations: int = 300
    agent_episodes_per_batch: int = 32
    agent_epsilon: float = 0.2
    agent_learning_rate: float = 0.05
    agent_temperature: float = 1.0
    agent_gamma: float = 0.99
    agent_updates_per_batch: int = 4

    compare_episodes: int = 200

    # -- derived views -------------------------------------------------------

    def resolved_log_path(self) -> Path:
        return Path(self.log_path) if self.log_path else Path(self.out_dir) / "events.csv"

    def mf_hyperparams(self) -> Hyperparams:
        return Hyperparams(
            factors=self.mf_factors,
            reg_user=self.mf_reg_user,
            reg_exercise=self.mf_reg_exercise,
            learning_rate=self.mf_learning_rate,
            steps_per_interaction=self.mf_steps_per_interaction,
            init_scale=self.mf_init_scale,
        )

    def forest_config(self, seed_offset: int = 0) -> ForestConfig:
        return ForestConfig(
            n_trees=self.forest_trees,
            max_depth=self.forest_max_depth,
            min_samples_leaf=self.forest_min_samples_leaf,
            features_per_split=self.forest_features_per_split,
            seed=self.seed + seed_offset,
        )

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            target_score=self.reward_target,
            retention_weight=self.reward_retention_weight,
            sign_mode=self.reward_sign_mode,
        )

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            iterations=self.agent_iterations,
            episodes_per_batch=self.agent_episodes_per_batch,
            epsilon=self.agent_epsilon,
            learning_rate=self.agent_learning_rate,
            temperature=self.agent_temperature,
            gamma=self.agent_gamma,
            updates_per_batch=self.agent_updates_per_batch,
            seed=self.seed,
        )

    def dropout_coeffs(self) -> tuple[float, float, float]:
        return (self.synth_dropout_intercept,
                self.synth_dropout_per_failure,
                self.synth_dropout_per_easy_success)

    def as_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def load_config(path: str | Path | None) -> ExperimentConfig:
    config = ExperimentConfig()
    if path is None:
        return config
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a flat JSON object")
    for key, value in doc.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        setattr(config, key, value)
    return config
