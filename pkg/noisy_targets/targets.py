"""
Target abduction from revised groundings and target rearrangement.

Every sample yields several relabelings whose positive rate agrees with the
knowledge base; rearrangement then hands each instance the ``p`` labels its own
sample's targets give it.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, List, Optional, Tuple

import numpy as np

from noisy_targets.dns_core import DiverseNoisySamples, Instance, NoisySample
from noisy_targets.exceptions import ConfigurationError, RearrangementError, TargetMultiplicityError
from noisy_targets.knowledge import KnowledgeBase, Predicate
from noisy_targets.reasoning import RevisedGroundingSet

logger = logging.getLogger(__name__)

# keeps float products such as 0.3 * 10 on the intended integer
ROUNDING_SLACK = 1e-9


class TargetBias(str, enum.Enum):
    UNDER = "under"
    INTERMEDIATE = "intermediate"
    OVER = "over"
    NOISY = "noisy"


@dataclass(frozen=True)
class TargetParams:
    """
    ``targets_per_sample`` knowledge-consistent targets per sample, from the
    under-biased to the over-biased one; ``include_noisy`` appends the
    sample's own noisy labels as one more target.
    """

    targets_per_sample: int = 2
    include_noisy: bool = False

    def __post_init__(self):
        if self.targets_per_sample < 1:
            raise ConfigurationError("targets_per_sample must be at least 1")

    @property
    def per_sample(self):
        return self.targets_per_sample + int(self.include_noisy)


@dataclass(frozen=True)
class AbducedTarget:
    """
    A relabeling of one sample, aligned with its instance order.

    ``revised_groundings_used`` and ``instances_used`` record how many revised
    groundings and instances of the source sample the target was built from.
    """

    target_id: int
    source_sample: int
    bias: TargetBias
    labels: Tuple[float, ...]
    revised_groundings_used: int = 0
    instances_used: int = 0
    repaired_rate: Optional[float] = None

    @property
    def positive_count(self):
        return sum(1 for label in self.labels if label >= 0.5)

    @property
    def positive_rate(self):
        return self.positive_count / len(self.labels)


@dataclass(frozen=True)
class TargetSet:
    targets: Tuple[AbducedTarget, ...]
    params: TargetParams = field(default_factory=TargetParams)

    def __iter__(self) -> Iterator[AbducedTarget]:
        return iter(self.targets)

    def __len__(self):
        return len(self.targets)

    @property
    def m(self):
        return len(self.targets)

    def for_sample(self, sample_id) -> List[AbducedTarget]:
        return [target for target in self.targets if target.source_sample == sample_id]


def count_bounds(lo, hi, n) -> Tuple[int, int]:
    """
    Positive counts of the under- and over-biased targets for ``n`` instances.
    """
    under = min(max(math.ceil(lo * n - ROUNDING_SLACK), 0), n)
    over = min(max(math.floor(hi * n + ROUNDING_SLACK), 0), n)
    return under, over


def confidence_ranking(sample: NoisySample) -> np.ndarray:
    """
    Instance positions ordered by confidence of being positive.

    Noisy positives come first, then noisy negatives; each group is sorted by
    descending ``feature[0]`` with ties kept in instance order.
    """
    if sample.dimension == 0:
        raise ConfigurationError(f"sample {sample.id} has no features to rank instances by")
    score = sample.features[:, 0]
    positions = np.arange(sample.size)
    hard = np.asarray(sample.hard_labels)
    ranked = []
    for group in (positions[hard], positions[~hard]):
        order = np.argsort(-score[group], kind="stable")
        ranked.append(group[order])
    return np.concatenate(ranked)


def promotion_order(sample: NoisySample, under) -> np.ndarray:
    """
    Instance positions in the order targets turn them positive.

    The ``under`` best-ranked instances come first, then the remaining noisy
    negatives by rank, then the remaining noisy positives.
    """
    ranking = confidence_ranking(sample)
    kept, rest = ranking[:under], ranking[under:]
    hard = np.asarray(sample.hard_labels)[rest]
    return np.concatenate([kept, rest[~hard], rest[hard]])


def slot_counts(under, over, slots) -> List[int]:
    if slots == 1:
        return [under]
    span = 2 * (slots - 1)
    return [under + ((over - under) * 2 * k + slots - 1) // span for k in range(slots)]


def slot_bias(k, slots) -> TargetBias:
    if k == 0:
        return TargetBias.UNDER
    if k == slots - 1:
        return TargetBias.OVER
    return TargetBias.INTERMEDIATE


def abduce_targets(
    revised: RevisedGroundingSet,
    dns: DiverseNoisySamples,
    kb: KnowledgeBase,
    params: Optional[TargetParams] = None,
) -> TargetSet:
    """
    Build knowledge-consistent targets for every noisy sample.

    The under-biased target keeps the ``ceil(lo * n)`` best-ranked instances
    positive. The over-biased one also promotes the highest-scoring noisy
    negatives until ``floor(hi * n)`` instances are positive. Intermediate
    targets stop in between, so each target's positives contain the previous ones.

    :param revised: revised groundings of ``dns``
    :param dns: the noisy samples
    :param kb: knowledge base holding a positive_rate item
    :param params: target settings
    :raises ConfigurationError: no positive_rate knowledge item
    """
    params = params or TargetParams()
    item = kb.require(Predicate.POSITIVE_RATE)
    slots = params.targets_per_sample
    targets = []
    next_id = 1
    for sample in dns:
        n = sample.size
        repaired_rate = revised.repaired_value(sample.id, Predicate.POSITIVE_RATE)
        if repaired_rate is None:
            repaired_rate = sample.positive_rate
        under, over = count_bounds(item.admissible_lo, item.admissible_hi, n)
        if under > over:
            middle = min(max(round((item.admissible_lo + item.admissible_hi) / 2 * n), 0), n)
            logger.warning(
                "sample %s with %d instances cannot land inside [%r, %r]; using %d positives",
                sample.id, n, item.admissible_lo, item.admissible_hi, middle,
            )
            under = over = middle
        order = promotion_order(sample, under)
        provenance = {
            "revised_groundings_used": len(revised.for_sample(sample.id)),
            "instances_used": n,
            "repaired_rate": repaired_rate,
        }
        for k, count in enumerate(slot_counts(under, over, slots)):
            labels = np.zeros(n)
            labels[order[:count]] = 1.0
            targets.append(
                AbducedTarget(next_id, sample.id, slot_bias(k, slots), tuple(labels.tolist()), **provenance)
            )
            next_id += 1
        if params.include_noisy:
            targets.append(AbducedTarget(next_id, sample.id, TargetBias.NOISY, sample.labels, **provenance))
            next_id += 1
    return TargetSet(tuple(targets), params)


@dataclass(frozen=True)
class RearrangeParams:
    """
    ``slot_order`` fixes the position of each bias in an instance's target list.
    """

    slot_order: Tuple[TargetBias, ...] = tuple(TargetBias)

    def __post_init__(self):
        order = tuple(TargetBias(bias) for bias in self.slot_order)
        if sorted(order) != sorted(TargetBias):
            raise ConfigurationError("slot_order must list every target bias exactly once")
        object.__setattr__(self, "slot_order", order)


@dataclass(frozen=True, eq=False)
class RearrangedTargets:
    """
    Every instance of every sample with its ``p`` target labels.

    Row ``i`` of ``targets`` belongs to ``instances[i]``.
    """

    instances: Tuple[Instance, ...]
    targets: np.ndarray
    biases: Tuple[Tuple[TargetBias, ...], ...] = ()

    def __post_init__(self):
        targets = np.array(self.targets, dtype=float, ndmin=2)
        targets.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        if targets.shape[0] != len(self.instances):
            raise RearrangementError(f"{targets.shape[0]} target rows for {len(self.instances)} instances")

    @property
    def n(self):
        return len(self.instances)

    @property
    def p(self):
        return self.targets.shape[1]

    @cached_property
    def features(self) -> np.ndarray:
        matrix = np.array([instance.features for instance in self.instances], dtype=float)
        return matrix.reshape(self.n, -1)

    def rows(self):
        for instance, labels in zip(self.instances, self.targets):
            yield instance, tuple(labels.tolist())


def rearrange_targets(
    target_set: TargetSet, dns: DiverseNoisySamples, params: Optional[RearrangeParams] = None
) -> RearrangedTargets:
    """
    Give every instance the ``p = m / d`` labels of its sample's targets.

    :param target_set: abduced targets
    :param dns: the noisy samples the targets were abduced from
    :param params: slot ordering
    :raises RearrangementError: ``m`` not divisible by ``d`` or uneven coverage
    :raises TargetMultiplicityError: ``p == 1``
    """
    params = params or RearrangeParams()
    known = set(dns.sample_ids)
    for target in target_set:
        if target.source_sample not in known:
            raise RearrangementError(f"target {target.target_id} names unknown sample {target.source_sample}")
    m, d = target_set.m, dns.d
    if m % d:
        raise RearrangementError(f"{m} targets cannot be split evenly over {d} samples (p = m / d)")
    p = m // d
    if p <= 1:
        raise TargetMultiplicityError(f"every instance needs more than one target, got p = {p}")

    position = {bias: index for index, bias in enumerate(params.slot_order)}
    instances = []
    blocks = []
    slot_biases = []
    for sample in dns:
        group = sorted(target_set.for_sample(sample.id), key=lambda t: (position[t.bias], t.target_id))
        if len(group) != p:
            raise RearrangementError(f"sample {sample.id} has {len(group)} targets, expected {p}")
        for target in group:
            if len(target.labels) != sample.size:
                raise RearrangementError(
                    f"target {target.target_id} has {len(target.labels)} labels for {sample.size} instances"
                )
        instances.extend(sample.instances)
        blocks.append(np.column_stack([target.labels for target in group]))
        slot_biases.append(tuple(target.bias for target in group))
    return RearrangedTargets(tuple(instances), np.vstack(blocks), tuple(slot_biases))
