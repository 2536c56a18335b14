"""
Knowledge base and grounding extraction.

Groundings are ``(predicate, statistic)`` facts read off each noisy label
sample. The knowledge base states, per predicate, the interval the true target
is known to fall in.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from noisy_targets.dns_core import DiverseNoisySamples, NoisySample
from noisy_targets.exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)


class Predicate(str, enum.Enum):
    POSITIVE_RATE = "positive_rate"
    MEAN_POSITIVE_RUN_LENGTH = "mean_positive_run_length"
    POSITIVE_FEATURE_MEAN_GAP = "positive_feature_mean_gap"
    BOUNDARY_DENSITY = "boundary_density"

    @classmethod
    def parse(cls, name):
        try:
            return cls(name)
        except ValueError as error:
            known = ", ".join(predicate.value for predicate in cls)
            raise ConfigurationError(f"unknown predicate {name!r}, expected one of: {known}") from error


class Polarity(str, enum.Enum):
    ASSERTED = "asserted"
    NEGATED = "negated"


@dataclass(frozen=True)
class KnowledgeItem:
    """
    Admissible interval of one predicate on the true target, with a weight.
    """

    id: int
    predicate: Predicate
    admissible_lo: float
    admissible_hi: float
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "predicate", Predicate.parse(self.predicate))
        if not (math.isfinite(self.admissible_lo) and math.isfinite(self.admissible_hi)):
            raise ConfigurationError(f"knowledge item {self.id} has a non-finite interval")
        if self.admissible_lo > self.admissible_hi:
            raise ConfigurationError(
                f"knowledge item {self.id}: lo {self.admissible_lo!r} exceeds hi {self.admissible_hi!r}"
            )
        if not math.isfinite(self.weight) or self.weight <= 0:
            raise ConfigurationError(f"knowledge item {self.id}: weight must be finite and positive")

    def distance(self, value):
        """
        Distance from ``value`` to the admissible interval (0 inside it).
        """
        return max(0.0, self.admissible_lo - value, value - self.admissible_hi)

    def clamp(self, value):
        return min(max(value, self.admissible_lo), self.admissible_hi)


@dataclass(frozen=True)
class KnowledgeBase:
    items: Tuple[KnowledgeItem, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ConfigurationError("knowledge base is empty")
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"knowledge item ids are not unique: {ids}")
        predicates = [item.predicate for item in self.items]
        if len(set(predicates)) != len(predicates):
            raise ConfigurationError("knowledge base has more than one item for a predicate")

    def __iter__(self) -> Iterator[KnowledgeItem]:
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def item_for(self, predicate) -> Optional[KnowledgeItem]:
        for item in self.items:
            if item.predicate == predicate:
                return item
        return None

    def require(self, predicate) -> KnowledgeItem:
        item = self.item_for(predicate)
        if item is None:
            raise ConfigurationError(f"knowledge base has no {Predicate(predicate).value} item")
        return item


@dataclass(frozen=True)
class Grounding:
    id: int
    source_sample: int
    predicate: Predicate
    observed_value: float
    polarity: Polarity = Polarity.ASSERTED

    def __post_init__(self):
        object.__setattr__(self, "predicate", Predicate(self.predicate))
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if not math.isfinite(self.observed_value):
            raise InvalidInputError(f"grounding {self.id} has a non-finite value")

    @property
    def asserted(self):
        return self.polarity is Polarity.ASSERTED


@dataclass(frozen=True)
class GroundingParams:
    """
    Grounding extraction settings.

    ``per_sample`` maps a sample id to the predicates enabled for that sample
    only; other samples use ``enabled``. ``run_length_window`` restricts the
    run-length statistic to the first instances of each sample.
    """

    enabled: Tuple[Predicate, ...] = tuple(Predicate)
    run_length_window: Optional[int] = None
    per_sample: Mapping[int, Tuple[Predicate, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "enabled", _ordered_predicates(self.enabled))
        object.__setattr__(
            self,
            "per_sample",
            {int(sample_id): _ordered_predicates(predicates) for sample_id, predicates in self.per_sample.items()},
        )
        if self.run_length_window is not None and self.run_length_window < 1:
            raise ConfigurationError("grounding run_length_window must be a positive integer")

    def predicates_for(self, sample_id) -> Tuple[Predicate, ...]:
        return self.per_sample.get(sample_id, self.enabled)


def _ordered_predicates(predicates) -> Tuple[Predicate, ...]:
    chosen = {Predicate.parse(predicate) for predicate in predicates}
    if not chosen:
        raise ConfigurationError("at least one grounding predicate must be enabled")
    return tuple(predicate for predicate in Predicate if predicate in chosen)


@dataclass(frozen=True)
class GroundingSet:
    """
    Groundings per noisy sample, in the order of ``sample_ids``.
    """

    sample_ids: Tuple[int, ...]
    groundings: Tuple[Tuple[Grounding, ...], ...]
    params: GroundingParams = field(default_factory=GroundingParams)

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "groundings", tuple(tuple(group) for group in self.groundings))
        if len(self.sample_ids) != len(self.groundings):
            raise InvalidInputError("grounding lists do not match the sample ids")
        seen = set()
        for sample_id, group in zip(self.sample_ids, self.groundings):
            for grounding in group:
                if grounding.source_sample != sample_id:
                    raise InvalidInputError(
                        f"grounding {grounding.id} belongs to sample {grounding.source_sample}, "
                        f"listed under {sample_id}"
                    )
                if not grounding.asserted:
                    raise InvalidInputError(f"grounding {grounding.id} is not asserted")
                if grounding.id in seen:
                    raise InvalidInputError(f"grounding id {grounding.id} is repeated")
                seen.add(grounding.id)

    @property
    def sizes(self) -> Tuple[int, ...]:
        """
        ``r_d`` per sample.
        """
        return tuple(len(group) for group in self.groundings)

    def __iter__(self) -> Iterator[Grounding]:
        for group in self.groundings:
            yield from group

    def __len__(self):
        return sum(self.sizes)

    def for_sample(self, sample_id) -> Tuple[Grounding, ...]:
        return self.groundings[self.sample_ids.index(sample_id)]

    def by_id(self) -> Dict[int, Grounding]:
        return {grounding.id: grounding for grounding in self}

    def value_of(self, sample_id, predicate) -> Optional[float]:
        for grounding in self.for_sample(sample_id):
            if grounding.predicate == predicate:
                return grounding.observed_value
        return None


def positive_rate(hard: np.ndarray):
    return int(np.count_nonzero(hard)) / len(hard)


def mean_positive_run_length(hard: np.ndarray, window: Optional[int] = None):
    """
    Average length of maximal runs of consecutive positives (0 without positives).
    """
    if window is not None:
        hard = hard[:window]
    positives = int(np.count_nonzero(hard))
    if positives == 0:
        return 0.0
    padded = np.concatenate(([False], hard, [False])).astype(np.int8)
    runs = int(np.count_nonzero(np.diff(padded) == 1))
    return positives / runs


def positive_feature_mean_gap(first_feature: np.ndarray, hard: np.ndarray):
    positives = first_feature[hard]
    negatives = first_feature[~hard]
    if len(positives) == 0 or len(negatives) == 0:
        return 0.0
    return abs(math.fsum(positives) / len(positives) - math.fsum(negatives) / len(negatives))


def boundary_density(hard: np.ndarray):
    if len(hard) < 2:
        return 0.0
    return int(np.count_nonzero(hard[1:] != hard[:-1])) / (len(hard) - 1)


def compute_statistic(predicate: Predicate, sample: NoisySample, params: GroundingParams):
    """
    Value of ``predicate`` on one noisy sample.
    """
    hard = np.asarray(sample.hard_labels)
    if predicate is Predicate.POSITIVE_RATE:
        return positive_rate(hard)
    if predicate is Predicate.MEAN_POSITIVE_RUN_LENGTH:
        return mean_positive_run_length(hard, params.run_length_window)
    if predicate is Predicate.POSITIVE_FEATURE_MEAN_GAP:
        if sample.dimension == 0:
            raise ConfigurationError(f"{predicate.value} needs features but sample {sample.id} has none")
        return positive_feature_mean_gap(sample.features[:, 0], hard)
    return boundary_density(hard)


def extract_groundings(dns: DiverseNoisySamples, params: Optional[GroundingParams] = None) -> GroundingSet:
    """
    Extract one asserted grounding per enabled predicate from every sample.

    Grounding ids run from 1 in (sample order, predicate order).

    :param dns: the noisy samples
    :param params: extraction settings
    """
    params = params or GroundingParams()
    next_id = 1
    groundings = []
    for sample in dns:
        group = []
        for predicate in params.predicates_for(sample.id):
            group.append(Grounding(next_id, sample.id, predicate, compute_statistic(predicate, sample, params)))
            next_id += 1
        groundings.append(tuple(group))
    logger.debug("extracted %d groundings from %d samples", next_id - 1, dns.d)
    return GroundingSet(dns.sample_ids, tuple(groundings), params)


def items_from_records(records: Sequence[Tuple[str, float, float, float]]) -> KnowledgeBase:
    """
    Knowledge base from ``(predicate, lo, hi, weight)`` records, ids in record order.
    """
    return KnowledgeBase(
        tuple(
            KnowledgeItem(index, Predicate.parse(name), float(lo), float(hi), float(weight))
            for index, (name, lo, hi, weight) in enumerate(records, start=1)
        )
    )
