"""
Experiment configuration loaded from a YAML file.

Every block is optional; missing blocks and keys fall back to the default
experiment shipped in ``noisy_targets/conf/default_experiment.yaml``.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple

import yaml

from noisy_targets.dns_core import DiversityParams
from noisy_targets.exceptions import ConfigurationError, NoisyTargetsError
from noisy_targets.knowledge import GroundingParams
from noisy_targets.learner import LossConfig, ModelConfig, OptimConfig
from noisy_targets.reasoning import AbductionParams, ReasoningParams
from noisy_targets.synth import NoiseProfile, TaskSpec
from noisy_targets.targets import RearrangeParams, TargetParams

DEFAULT_CONFIG_PATH = Path(__file__).parent / "conf" / "default_experiment.yaml"
DEFAULT_OUTPUT_DIR = "output"
# (under, over) weights of the default target layout; other layouts default to uniform weights
DEFAULT_ALPHAS = (0.3, 0.7)

BLOCKS = {
    "task": TaskSpec,
    "diversity": DiversityParams,
    "grounding": GroundingParams,
    "reasoning": ReasoningParams,
    "abduction": AbductionParams,
    "targets": TargetParams,
    "rearrangement": RearrangeParams,
    "model": ModelConfig,
    "optim": OptimConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Every parameter block of one experiment.

    When ``enforce_diversity`` is false a failed diversity check is logged and
    the run continues with the unvalidated samples.
    ``output_dir`` may stay unset; see :meth:`with_default_output_dir`.
    """

    task: TaskSpec = field(default_factory=TaskSpec)
    diversity: DiversityParams = field(default_factory=DiversityParams)
    grounding: GroundingParams = field(default_factory=GroundingParams)
    reasoning: ReasoningParams = field(default_factory=ReasoningParams)
    abduction: AbductionParams = field(default_factory=AbductionParams)
    targets: TargetParams = field(default_factory=TargetParams)
    rearrangement: RearrangeParams = field(default_factory=RearrangeParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=lambda: default_loss(TargetParams()))
    optim: OptimConfig = field(default_factory=OptimConfig)
    seeds: Tuple[int, ...] = tuple(range(10))
    output_dir: Optional[str] = None
    enforce_diversity: bool = True
    test_fraction: float = 0.2
    evaluation_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(seed) for seed in self.seeds))
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if any(seed < 0 for seed in self.seeds):
            raise ConfigurationError("seeds must be non-negative")
        if self.loss.p != self.targets.per_sample:
            raise ConfigurationError(
                f"loss has {self.loss.p} alphas but every instance receives {self.targets.per_sample} targets"
            )
        if not 0.0 < self.test_fraction <= 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1]")
        if not 0.0 <= self.evaluation_threshold <= 1.0:
            raise ConfigurationError("evaluation_threshold must lie in [0, 1]")

    @property
    def test_size(self):
        return max(1, round(self.test_fraction * self.task.total_instances))

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return dataclasses.replace(self, seeds=tuple(seeds))

    def with_output_dir(self, output_dir) -> "ExperimentConfig":
        return dataclasses.replace(self, output_dir=str(output_dir))

    def with_default_output_dir(self, fallback=None) -> "ExperimentConfig":
        """
        Keep the configured ``output_dir``; otherwise use ``fallback``, then ``DEFAULT_OUTPUT_DIR``.
        """
        if self.output_dir is not None:
            return self
        return self.with_output_dir(fallback or DEFAULT_OUTPUT_DIR)

    def to_dict(self) -> dict:
        return _plain(self)

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "ExperimentConfig":
        """
        Build a config from parsed YAML, filling gaps from the defaults.
        """
        data = dict(data or {})
        known = {item.name for item in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        try:
            for name, block in BLOCKS.items():
                if name in data:
                    values[name] = _build(name, block, data.pop(name))
            if "loss" in data:
                values["loss"] = _build_loss(data.pop("loss"), values.get("targets", TargetParams()))
            else:
                values["loss"] = default_loss(values.get("targets", TargetParams()))
            values.update(data)
            return cls(**values)
        except NoisyTargetsError:
            raise
        except (TypeError, ValueError) as error:
            raise ConfigurationError(f"invalid config: {error}") from error


def _build(name, block, raw):
    if raw is None:
        return block()
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"config block '{name}' must be a mapping")
    known = {item.name for item in dataclasses.fields(block)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown keys in config block '{name}': {', '.join(unknown)}")
    raw = dict(raw)
    if block is TaskSpec and "noise_profiles" in raw:
        raw["noise_profiles"] = tuple(_profile(profile) for profile in raw["noise_profiles"])
    for key, value in raw.items():
        if isinstance(value, list):
            raw[key] = tuple(value)
    return block(**raw)


def _profile(raw):
    if isinstance(raw, Mapping):
        return NoiseProfile(**raw)
    return NoiseProfile(*raw)


def default_loss(targets: TargetParams, base_loss=LossConfig.base_loss) -> LossConfig:
    if targets == TargetParams():
        return LossConfig(base_loss, DEFAULT_ALPHAS)
    return LossConfig.uniform(targets.per_sample, base_loss)


def _build_loss(raw, targets: TargetParams) -> LossConfig:
    raw = dict(raw or {})
    unknown = sorted(set(raw) - {"base_loss", "alphas"})
    if unknown:
        raise ConfigurationError(f"unknown keys in config block 'loss': {', '.join(unknown)}")
    if raw.get("alphas") is None:
        return default_loss(targets, raw.get("base_loss", LossConfig.base_loss))
    return LossConfig(raw.get("base_loss", LossConfig.base_loss), tuple(raw["alphas"]))


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {item.name: _plain(getattr(value, item.name)) for item in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Mapping):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def load_config(path=None) -> ExperimentConfig:
    """
    Read an experiment config; ``None`` loads the packaged default.
    """
    path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf8"))
    except yaml.YAMLError as error:
        raise ConfigurationError(f"{path}: {error}") from error
    if data is not None and not isinstance(data, Mapping):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)
