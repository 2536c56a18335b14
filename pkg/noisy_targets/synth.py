"""
Synthetic task generator and evaluation metrics.

The generator plants the class signal in ``feature[0]``, gives every labeling
source its own disjoint instances and its own label-flip profile, and derives a
knowledge base from the generative parameters with some slack so the knowledge
is imprecise rather than an oracle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support

from noisy_targets.dns_core import DiverseNoisySamples, Instance, NoisySample
from noisy_targets.exceptions import ConfigurationError, InvalidInputError
from noisy_targets.knowledge import KnowledgeBase, KnowledgeItem, Predicate

logger = logging.getLogger(__name__)

RATE_SLACK = 0.05
RELATIVE_SLACK = 0.1
TEST_STREAM = 1


@dataclass(frozen=True)
class NoiseProfile:
    flip_0_to_1: float = 0.0
    flip_1_to_0: float = 0.0

    def __post_init__(self):
        for name in ("flip_0_to_1", "flip_1_to_0"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigurationError(f"noise profile {name} must lie in [0, 1)")

    def expected_positive_rate(self, truth_rate):
        return truth_rate * (1.0 - self.flip_1_to_0) + (1.0 - truth_rate) * self.flip_0_to_1


DEFAULT_PROFILES = (NoiseProfile(0.30, 0.00), NoiseProfile(0.00, 0.30), NoiseProfile(0.15, 0.15))


@dataclass(frozen=True)
class TaskSpec:
    d: int = 3
    n_per_sample: Tuple[int, ...] = (2000, 2000, 2000)
    feature_dim: int = 4
    signal_separation: float = 2.0
    truth_positive_rate: float = 0.3
    noise_profiles: Tuple[NoiseProfile, ...] = field(default=DEFAULT_PROFILES)

    def __post_init__(self):
        object.__setattr__(self, "n_per_sample", tuple(int(n) for n in self.n_per_sample))
        object.__setattr__(
            self,
            "noise_profiles",
            tuple(profile if isinstance(profile, NoiseProfile) else NoiseProfile(*profile)
                  for profile in self.noise_profiles),
        )
        if self.d < 2:
            raise ConfigurationError("task needs at least 2 noisy samples")
        if len(self.n_per_sample) != self.d or len(self.noise_profiles) != self.d:
            raise ConfigurationError("n_per_sample and noise_profiles must both have d entries")
        if any(n < 1 for n in self.n_per_sample):
            raise ConfigurationError("every noisy sample needs at least one instance")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be at least 1")
        if not math.isfinite(self.signal_separation):
            raise ConfigurationError("signal_separation must be finite")
        if not 0.0 < self.truth_positive_rate < 1.0:
            raise ConfigurationError("truth_positive_rate must lie in (0, 1)")
        if len(set(self.noise_profiles)) != len(self.noise_profiles):
            logger.warning("noise profiles repeat; generated samples may fail diversity validation")

    @property
    def total_instances(self):
        return sum(self.n_per_sample)


@dataclass(frozen=True)
class GeneratedTask:
    dns: DiverseNoisySamples
    truth: Mapping[int, int]
    kb: KnowledgeBase
    spec: TaskSpec
    seed: int


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    false_positives: int = 0
    true_negatives: int = 0
    false_negatives: int = 0


def _interval(center, slack, lower=0.0, upper=math.inf):
    return max(lower, center - slack), min(upper, center + slack)


def derive_knowledge_base(spec: TaskSpec) -> KnowledgeBase:
    """
    Knowledge about the true labels implied by the generative parameters.

    Run length and boundary density are the values expected from i.i.d. labels
    at the truth rate.
    """
    rate = spec.truth_positive_rate
    run_length = 1.0 / (1.0 - rate)
    boundary = 2.0 * rate * (1.0 - rate)
    gap = abs(spec.signal_separation)
    intervals = [
        (Predicate.POSITIVE_RATE, _interval(rate, RATE_SLACK, upper=1.0)),
        (Predicate.MEAN_POSITIVE_RUN_LENGTH, _interval(run_length, RELATIVE_SLACK * run_length)),
        (Predicate.POSITIVE_FEATURE_MEAN_GAP, _interval(gap, RELATIVE_SLACK * gap)),
        (Predicate.BOUNDARY_DENSITY, _interval(boundary, RATE_SLACK, upper=1.0)),
    ]
    return KnowledgeBase(
        tuple(KnowledgeItem(index, predicate, lo, hi, 1.0) for index, (predicate, (lo, hi)) in enumerate(intervals, 1))
    )


def _draw(rng, n, spec: TaskSpec):
    truth = rng.random(n) < spec.truth_positive_rate
    half = spec.signal_separation / 2.0
    features = rng.normal(size=(n, spec.feature_dim))
    features[:, 0] += np.where(truth, half, -half)
    return truth, features


def _instances(first_id, sample_index, features):
    return tuple(
        Instance(first_id + row, tuple(values), sample_index) for row, values in enumerate(features.tolist())
    )


def generate_task(spec: TaskSpec, seed: int) -> GeneratedTask:
    """
    Draw ground truth, features and one noisy labeling per sample.

    Instance ids run from 1 over all samples in order; sample ids from 1.

    :param spec: task description
    :param seed: random seed, the only source of randomness
    """
    rng = np.random.default_rng(seed)
    samples = []
    truth: Dict[int, int] = {}
    next_id = 1
    for index, (n, profile) in enumerate(zip(spec.n_per_sample, spec.noise_profiles), start=1):
        clean, features = _draw(rng, n, spec)
        flips = rng.random(n) < np.where(clean, profile.flip_1_to_0, profile.flip_0_to_1)
        noisy = clean ^ flips
        instances = _instances(next_id, index, features)
        samples.append(NoisySample(index, instances, tuple(noisy.astype(float).tolist())))
        truth.update((instance.id, int(label)) for instance, label in zip(instances, clean))
        next_id += n
    return GeneratedTask(DiverseNoisySamples(tuple(samples)), truth, derive_knowledge_base(spec), spec, seed)


def generate_test_split(spec: TaskSpec, seed: int, size: int, first_id=None) -> NoisySample:
    """
    Fresh clean instances from the same process, as sample id 0.

    Ids continue after the training instances unless ``first_id`` is given.
    """
    if size < 1:
        raise ConfigurationError("test split needs at least one instance")
    rng = np.random.default_rng([seed, TEST_STREAM])
    clean, features = _draw(rng, size, spec)
    start = spec.total_instances + 1 if first_id is None else first_id
    return NoisySample(0, _instances(start, 0, features), tuple(clean.astype(float).tolist()))


def evaluate(predicted: Mapping[int, float], truth: Mapping[int, int], threshold=0.5) -> Metrics:
    """
    Threshold predictions and score them against the truth.

    Precision and recall are 1 when their denominator is 0; f1 is 0 when both
    precision and recall are 0.

    :param predicted: instance id to predicted probability
    :param truth: instance id to true label
    :param threshold: predictions at or above it count as positive
    """
    if not predicted:
        raise InvalidInputError("no predictions to evaluate")
    missing = [instance_id for instance_id in predicted if instance_id not in truth]
    if missing:
        raise InvalidInputError(f"{len(missing)} predicted instances have no truth entry, first {missing[0]}")
    actual = np.array([int(bool(truth[instance_id])) for instance_id in predicted])
    positive = (np.fromiter(predicted.values(), dtype=float, count=len(predicted)) >= threshold).astype(int)
    tn, fp, fn, tp = (int(count) for count in confusion_matrix(actual, positive, labels=[0, 1]).ravel())
    precision, recall, f1, _ = precision_recall_fscore_support(
        actual, positive, average="binary", pos_label=1, zero_division=1
    )
    return Metrics(
        float(accuracy_score(actual, positive)), float(precision), float(recall), float(f1), tp, fp, tn, fn
    )
