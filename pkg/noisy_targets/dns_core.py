"""
Instances, noisy samples and the pairwise diversity predicate.

A noisy sample pairs an ordered instance sample with the labels one labeling
source gave it. A list of noisy samples is only usable as diverse noisy samples
once every pair differs both in its instances and in its label distribution.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from noisy_targets.exceptions import (
    ConfigurationError,
    DiversityViolationError,
    InvalidInputError,
    TooFewSamplesError,
)

logger = logging.getLogger(__name__)

POSITIVE_CUTOFF = 0.5


@dataclass(frozen=True)
class Instance:
    """
    One input of a noisy sample.

    ``sample_index`` is the id of the noisy sample owning the instance.
    """

    id: int
    features: Tuple[float, ...]
    sample_index: int

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(value) for value in self.features))
        if not all(math.isfinite(value) for value in self.features):
            raise InvalidInputError(f"instance {self.id} has non-finite features")

    @property
    def dimension(self):
        return len(self.features)


@dataclass(frozen=True)
class NoisySample:
    """
    Instances of one labeling source and the noisy labels it assigned.

    Labels are reals in ``[0, 1]``; hard labels are stored as ``0.0``/``1.0``.
    """

    id: int
    instances: Tuple[Instance, ...]
    labels: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "labels", tuple(float(label) for label in self.labels))
        if not self.instances:
            raise InvalidInputError(f"noisy sample {self.id} is empty")
        if len(self.instances) != len(self.labels):
            raise InvalidInputError(
                f"noisy sample {self.id} has {len(self.instances)} instances but {len(self.labels)} labels"
            )
        if any(not 0.0 <= label <= 1.0 for label in self.labels):
            raise InvalidInputError(f"noisy sample {self.id} has labels outside [0, 1]")
        dimensions = {instance.dimension for instance in self.instances}
        if len(dimensions) != 1:
            raise InvalidInputError(f"noisy sample {self.id} mixes feature dimensions {sorted(dimensions)}")
        ids = [instance.id for instance in self.instances]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"noisy sample {self.id} repeats instance ids")

    @property
    def size(self):
        return len(self.instances)

    @property
    def dimension(self):
        return self.instances[0].dimension

    @cached_property
    def ids(self) -> Tuple[int, ...]:
        return tuple(instance.id for instance in self.instances)

    @cached_property
    def features(self) -> np.ndarray:
        """
        Read-only ``(n, k)`` feature matrix in instance order.
        """
        matrix = np.array([instance.features for instance in self.instances], dtype=float)
        matrix = matrix.reshape(self.size, self.dimension)
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def label_array(self) -> np.ndarray:
        array = np.array(self.labels, dtype=float)
        array.setflags(write=False)
        return array

    @cached_property
    def hard_labels(self) -> np.ndarray:
        hard = self.label_array >= POSITIVE_CUTOFF
        hard.setflags(write=False)
        return hard

    @property
    def positive_rate(self):
        return int(np.count_nonzero(self.hard_labels)) / self.size

    def hard_label_map(self) -> Dict[int, bool]:
        return dict(zip(self.ids, (bool(value) for value in self.hard_labels)))


@dataclass(frozen=True)
class DiversityParams:
    """
    Thresholds of the two differentiate tests.
    """

    instance_threshold: float = 1e-6
    label_threshold: float = 0.1

    def __post_init__(self):
        for name in ("instance_threshold", "label_threshold"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"diversity {name} must be finite and non-negative, got {value!r}")
        if self.label_threshold > 1:
            raise ConfigurationError(f"diversity label_threshold must lie in [0, 1], got {self.label_threshold!r}")


@dataclass(frozen=True)
class DiverseNoisySamples:
    """
    An ordered collection of noisy samples sharing one feature dimension.

    Only collections returned by :func:`validate_dns` are guaranteed to be
    pairwise diverse; building one directly checks structure only.
    """

    samples: Tuple[NoisySample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise InvalidInputError("no noisy samples given")
        sample_ids = [sample.id for sample in self.samples]
        if len(set(sample_ids)) != len(sample_ids):
            raise InvalidInputError(f"noisy sample ids are not unique: {sample_ids}")
        dimensions = {sample.dimension for sample in self.samples}
        if len(dimensions) != 1:
            raise InvalidInputError(f"noisy samples mix feature dimensions {sorted(dimensions)}")

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    @property
    def d(self):
        return len(self.samples)

    @property
    def sample_ids(self) -> Tuple[int, ...]:
        return tuple(sample.id for sample in self.samples)

    @property
    def total_instances(self):
        return sum(sample.size for sample in self.samples)

    @property
    def dimension(self):
        return self.samples[0].dimension

    def sample(self, sample_id) -> NoisySample:
        for sample in self.samples:
            if sample.id == sample_id:
                return sample
        raise InvalidInputError(f"unknown noisy sample id {sample_id}")

    def restricted_to(self, sample_id) -> "DiverseNoisySamples":
        """
        Single-sample collection holding only ``sample_id``.
        """
        return DiverseNoisySamples((self.sample(sample_id),))


def mean_nearest_distance(a: np.ndarray, b: np.ndarray):
    """
    Mean over rows of ``a`` of the Euclidean distance to the nearest row of ``b``.
    """
    squared = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(squared, 0.0, out=squared)
    return float(np.sqrt(squared.min(axis=1)).mean())


def differentiate_instances(a: NoisySample, b: NoisySample, params: DiversityParams) -> int:
    """
    Return 1 when the instance samples of ``a`` and ``b`` differ.

    :param a: first noisy sample
    :param b: second noisy sample
    :param params: thresholds
    """
    if a.dimension != b.dimension:
        raise InvalidInputError(
            f"feature dimension mismatch between samples {a.id} ({a.dimension}) and {b.id} ({b.dimension})"
        )
    if Counter(a.ids) != Counter(b.ids):
        return 1
    distance = (mean_nearest_distance(a.features, b.features) + mean_nearest_distance(b.features, a.features)) / 2.0
    return int(distance > params.instance_threshold)


def differentiate_labels(a: NoisySample, b: NoisySample, params: DiversityParams) -> int:
    """
    Return 1 when the noisy label samples of ``a`` and ``b`` differ.

    Positive rates are compared first; when the samples share instance ids the
    hard-label disagreement rate on those ids is compared as well.

    :param a: first noisy sample
    :param b: second noisy sample
    :param params: thresholds
    """
    if abs(a.positive_rate - b.positive_rate) > params.label_threshold:
        return 1
    labels_a = a.hard_label_map()
    labels_b = b.hard_label_map()
    shared = labels_a.keys() & labels_b.keys()
    if not shared:
        return 0
    disagreements = sum(1 for instance_id in shared if labels_a[instance_id] != labels_b[instance_id])
    return int(disagreements / len(shared) > params.label_threshold)


def diversity(a: NoisySample, b: NoisySample, params: DiversityParams) -> int:
    """
    Binary diversity of two noisy samples.
    """
    return differentiate_instances(a, b, params) * differentiate_labels(a, b, params)


def non_diverse_pairs(samples: Sequence[NoisySample], params: DiversityParams) -> List[Tuple[int, int]]:
    """
    Every pair of list positions ``(i, j)``, ``i < j``, whose samples have diversity 0.
    """
    return [
        (i, j)
        for (i, a), (j, b) in itertools.combinations(enumerate(samples), 2)
        if diversity(a, b, params) == 0
    ]


def validate_dns(samples: Iterable[NoisySample], params: DiversityParams) -> DiverseNoisySamples:
    """
    Accept ``samples`` as diverse noisy samples.

    :param samples: noisy samples, at least two
    :param params: thresholds
    :raises TooFewSamplesError: fewer than two samples
    :raises DiversityViolationError: listing every non-diverse pair
    """
    samples = tuple(samples)
    if len(samples) < 2:
        raise TooFewSamplesError(f"diverse noisy samples need at least 2 samples, got {len(samples)}")
    violations = non_diverse_pairs(samples, params)
    if violations:
        raise DiversityViolationError(violations, [sample.id for sample in samples])
    logger.debug("validated %d diverse noisy samples", len(samples))
    return DiverseNoisySamples(samples)
