"""
Inconsistency estimation and logical abduction over groundings.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, Optional, Tuple

from noisy_targets.exceptions import ConfigurationError, InternalConsistencyError
from noisy_targets.knowledge import Grounding, GroundingSet, KnowledgeBase, Polarity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReasoningParams:
    """
    ``tolerance`` suppresses magnitudes at or below floating-point noise.
    """

    tolerance: float = 1e-9

    def __post_init__(self):
        if not math.isfinite(self.tolerance) or self.tolerance < 0:
            raise ConfigurationError("reasoning tolerance must be finite and non-negative")


@dataclass(frozen=True)
class AbductionParams:
    """
    Corrective values are clamped into the violated interval shrunk by
    ``margin`` times its width on both sides; 0 clamps to the nearest bound.
    """

    margin: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.margin <= 0.5:
            raise ConfigurationError("abduction margin must lie in [0, 0.5]")


@dataclass(frozen=True)
class Inconsistency:
    grounding_id: int
    knowledge_id: int
    magnitude: float


@dataclass(frozen=True)
class InconsistencySet:
    """
    Inconsistencies per sample plus the ids of groundings no item could judge.
    """

    sample_ids: Tuple[int, ...]
    inconsistencies: Tuple[Tuple[Inconsistency, ...], ...]
    unmatched: Tuple[int, ...] = ()
    params: ReasoningParams = field(default_factory=ReasoningParams)

    def __iter__(self) -> Iterator[Inconsistency]:
        for group in self.inconsistencies:
            yield from group

    def __len__(self):
        return sum(self.sizes)

    @property
    def sizes(self) -> Tuple[int, ...]:
        """
        ``i_d`` per sample.
        """
        return tuple(len(group) for group in self.inconsistencies)

    @property
    def total(self):
        return math.fsum(item.magnitude for item in self)


def estimate_inconsistencies(
    groundings: GroundingSet, kb: KnowledgeBase, params: Optional[ReasoningParams] = None
) -> InconsistencySet:
    """
    Weighted distance of every asserted grounding from its knowledge interval.

    Groundings whose predicate has no knowledge item are skipped and listed in
    ``unmatched``.

    :param groundings: extracted groundings
    :param kb: knowledge base
    :param params: tolerance settings
    """
    params = params or ReasoningParams()
    unmatched = []
    per_sample = []
    for group in groundings.groundings:
        found = []
        for grounding in group:
            if not grounding.asserted:
                continue
            item = kb.item_for(grounding.predicate)
            if item is None:
                unmatched.append(grounding.id)
                continue
            magnitude = item.weight * item.distance(grounding.observed_value)
            if magnitude > params.tolerance:
                found.append(Inconsistency(grounding.id, item.id, magnitude))
        per_sample.append(tuple(found))
    if unmatched:
        logger.info("skipped %d groundings without a knowledge item", len(unmatched))
    return InconsistencySet(groundings.sample_ids, tuple(per_sample), tuple(unmatched), params)


class RevisionStatus(str, enum.Enum):
    KEPT = "kept"
    NEGATED = "negated"
    ADDED = "added"


@dataclass(frozen=True)
class RevisedGrounding:
    """
    One entry of a revised grounding list.

    ``corrects`` is the id of the negated grounding an added one replaces;
    ``magnitude`` is the inconsistency that caused a negation.
    """

    grounding: Grounding
    status: RevisionStatus
    corrects: Optional[int] = None
    magnitude: float = 0.0

    @property
    def asserted(self):
        return self.status is not RevisionStatus.NEGATED


@dataclass(frozen=True)
class RevisedGroundingSet:
    sample_ids: Tuple[int, ...]
    entries: Tuple[Tuple[RevisedGrounding, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(group) for group in self.entries))
        for sample_id, group in zip(self.sample_ids, self.entries):
            negated = {entry.grounding.id: entry.grounding for entry in group if entry.status is RevisionStatus.NEGATED}
            added = [entry for entry in group if entry.status is RevisionStatus.ADDED]
            corrected = [entry.corrects for entry in added]
            if sorted(corrected) != sorted(negated):
                raise InternalConsistencyError(f"sample {sample_id}: negated and added groundings are not paired")
            for entry in added:
                original = negated[entry.corrects]
                if (entry.grounding.predicate, entry.grounding.source_sample) != (
                    original.predicate,
                    original.source_sample,
                ):
                    raise InternalConsistencyError(
                        f"grounding {entry.grounding.id} does not correct the predicate of {original.id}"
                    )

    def __iter__(self) -> Iterator[RevisedGrounding]:
        for group in self.entries:
            yield from group

    def _count(self, status):
        return tuple(sum(1 for entry in group if entry.status is status) for group in self.entries)

    @property
    def kept_counts(self) -> Tuple[int, ...]:
        """
        ``q_o`` per sample.
        """
        return self._count(RevisionStatus.KEPT)

    @property
    def negated_counts(self) -> Tuple[int, ...]:
        return self._count(RevisionStatus.NEGATED)

    @property
    def added_counts(self) -> Tuple[int, ...]:
        """
        ``z_o`` per sample.
        """
        return self._count(RevisionStatus.ADDED)

    @property
    def original_counts(self) -> Tuple[int, ...]:
        """
        ``r_o`` per sample.
        """
        return tuple(kept + negated for kept, negated in zip(self.kept_counts, self.negated_counts))

    @property
    def size(self):
        """
        ``s``, the flattened number of entries.
        """
        return sum(len(group) for group in self.entries)

    def for_sample(self, sample_id) -> Tuple[RevisedGrounding, ...]:
        return self.entries[self.sample_ids.index(sample_id)]

    def repaired_value(self, sample_id, predicate) -> Optional[float]:
        """
        Asserted value of ``predicate`` on ``sample_id`` after revision.
        """
        for entry in self.for_sample(sample_id):
            if entry.asserted and entry.grounding.predicate == predicate:
                return entry.grounding.observed_value
        return None

    def asserted(self) -> GroundingSet:
        """
        Kept and corrective groundings as a grounding set.
        """
        return GroundingSet(
            self.sample_ids,
            tuple(tuple(entry.grounding for entry in group if entry.asserted) for group in self.entries),
        )


def abduce_revisions(
    inconsistencies: InconsistencySet,
    groundings: GroundingSet,
    kb: KnowledgeBase,
    params: Optional[AbductionParams] = None,
) -> RevisedGroundingSet:
    """
    Negate every inconsistent grounding and add a corrective one inside the interval.

    Added groundings take fresh ids after the largest existing id, in
    (sample order, original id) order, and follow the originals of their sample.

    :param inconsistencies: output of :func:`estimate_inconsistencies` on ``groundings``
    :param groundings: the groundings to revise
    :param kb: the knowledge base the inconsistencies were measured against
    :param params: abduction settings
    :raises InternalConsistencyError: an inconsistency names an unknown grounding or item
    """
    params = params or AbductionParams()
    known = groundings.by_id()
    items = {item.id: item for item in kb}
    violations: Dict[int, Inconsistency] = {}
    for inconsistency in inconsistencies:
        if inconsistency.grounding_id not in known:
            raise InternalConsistencyError(f"inconsistency names unknown grounding {inconsistency.grounding_id}")
        if inconsistency.knowledge_id not in items:
            raise InternalConsistencyError(f"inconsistency names unknown knowledge item {inconsistency.knowledge_id}")
        violations[inconsistency.grounding_id] = inconsistency

    next_id = max(known, default=0) + 1
    revised = []
    for group in groundings.groundings:
        entries = []
        corrections = []
        for grounding in sorted(group, key=lambda item: item.id):
            violation = violations.get(grounding.id)
            if violation is None:
                entries.append(RevisedGrounding(grounding, RevisionStatus.KEPT))
                continue
            entries.append(
                RevisedGrounding(
                    replace(grounding, polarity=Polarity.NEGATED),
                    RevisionStatus.NEGATED,
                    magnitude=violation.magnitude,
                )
            )
            item = items[violation.knowledge_id]
            inset = params.margin * (item.admissible_hi - item.admissible_lo)
            value = min(max(grounding.observed_value, item.admissible_lo + inset), item.admissible_hi - inset)
            corrective = Grounding(next_id, grounding.source_sample, grounding.predicate, value)
            corrections.append(RevisedGrounding(corrective, RevisionStatus.ADDED, corrects=grounding.id))
            next_id += 1
        revised.append(tuple(entries + corrections))
    result = RevisedGroundingSet(groundings.sample_ids, tuple(revised))
    logger.debug("abduction negated %d groundings", sum(result.negated_counts))
    return result

