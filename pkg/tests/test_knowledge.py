#!/usr/bin/env python
"""
Tests for the `noisy-targets` knowledge module.
"""
import math

import numpy as np
import pytest

from noisy_targets.dns_core import Instance, NoisySample
from noisy_targets.exceptions import ConfigurationError, InvalidInputError
from noisy_targets.knowledge import (
    Grounding,
    GroundingParams,
    GroundingSet,
    KnowledgeBase,
    KnowledgeItem,
    Polarity,
    Predicate,
    boundary_density,
    compute_statistic,
    extract_groundings,
    items_from_records,
    mean_positive_run_length,
    positive_feature_mean_gap,
    positive_rate,
)
from test_utils import make_dns, make_kb, make_sample


def hard(*values):
    return np.array(values, dtype=bool)


def test_statistics_on_known_labels():
    labels = hard(1, 1, 0, 1, 0, 0, 1, 1, 1)
    assert positive_rate(labels) == pytest.approx(6 / 9)
    assert mean_positive_run_length(labels) == 2.0
    assert mean_positive_run_length(labels, window=4) == 1.5
    assert boundary_density(hard(0, 1, 1, 0)) == pytest.approx(2 / 3)
    assert boundary_density(hard(1)) == 0.0
    assert mean_positive_run_length(hard(0, 0, 0)) == 0.0


def test_feature_mean_gap():
    first_feature = np.array([3.0, 1.0, -1.0, -3.0])
    assert positive_feature_mean_gap(first_feature, hard(1, 1, 0, 0)) == 4.0
    assert positive_feature_mean_gap(first_feature, hard(1, 1, 1, 1)) == 0.0


def test_feature_predicate_needs_features():
    sample = NoisySample(1, (Instance(1, (), 1), Instance(2, (), 1)), (0.0, 1.0))
    params = GroundingParams()
    assert compute_statistic(Predicate.POSITIVE_RATE, sample, params) == 0.5
    with pytest.raises(ConfigurationError):
        compute_statistic(Predicate.POSITIVE_FEATURE_MEAN_GAP, sample, params)


def test_extract_groundings_ids_and_sizes():
    dns = make_dns(make_sample(1, [1, 0, 0, 1]), make_sample(2, [0, 0, 0, 1], first_id=10))
    groundings = extract_groundings(dns)
    assert groundings.sizes == (4, 4)
    assert [grounding.id for grounding in groundings] == list(range(1, 9))
    assert all(grounding.polarity is Polarity.ASSERTED for grounding in groundings)
    assert [grounding.predicate for grounding in groundings.for_sample(2)] == list(Predicate)
    assert groundings.value_of(1, Predicate.POSITIVE_RATE) == 0.5
    assert groundings.value_of(2, Predicate.POSITIVE_RATE) == 0.25


def test_extract_groundings_per_sample_predicates():
    dns = make_dns(make_sample(1, [1, 0, 0, 1]), make_sample(2, [0, 0, 0, 1], first_id=10))
    params = GroundingParams(
        enabled=("boundary_density", "positive_rate"),
        per_sample={2: ("positive_rate",)},
    )
    groundings = extract_groundings(dns, params)
    assert groundings.sizes == (2, 1)
    assert [grounding.predicate for grounding in groundings.for_sample(1)] == [
        Predicate.POSITIVE_RATE, Predicate.BOUNDARY_DENSITY,
    ]
    assert groundings.value_of(2, Predicate.BOUNDARY_DENSITY) is None


def test_extract_groundings_run_length_window():
    dns = make_dns(make_sample(1, [1, 0, 1, 1, 1, 1]), make_sample(2, [0, 1], first_id=10))
    groundings = extract_groundings(dns, GroundingParams(enabled=("mean_positive_run_length",), run_length_window=3))
    assert groundings.value_of(1, Predicate.MEAN_POSITIVE_RUN_LENGTH) == 1.0


def test_grounding_params_validation():
    with pytest.raises(ConfigurationError):
        GroundingParams(enabled=())
    with pytest.raises(ConfigurationError):
        GroundingParams(enabled=("label_entropy",))
    with pytest.raises(ConfigurationError):
        GroundingParams(run_length_window=0)


def test_grounding_set_checks_membership():
    grounding = Grounding(1, 2, Predicate.POSITIVE_RATE, 0.4)
    with pytest.raises(InvalidInputError):
        GroundingSet((1,), ((grounding,),))
    with pytest.raises(InvalidInputError):
        GroundingSet((2,), ((grounding, grounding),))
    negated = Grounding(3, 2, Predicate.POSITIVE_RATE, 0.4, Polarity.NEGATED)
    with pytest.raises(InvalidInputError):
        GroundingSet((2,), ((negated,),))


def test_knowledge_item_distance_and_clamp():
    item = KnowledgeItem(1, Predicate.POSITIVE_RATE, 0.25, 0.35, 2.0)
    assert item.distance(0.3) == 0.0
    assert item.distance(0.5) == pytest.approx(0.15)
    assert item.distance(0.05) == pytest.approx(0.2)
    assert item.clamp(0.5) == 0.35
    assert item.clamp(0.0) == 0.25


def test_knowledge_item_validation():
    with pytest.raises(ConfigurationError):
        KnowledgeItem(1, "positive_rate", 0.4, 0.3)
    with pytest.raises(ConfigurationError):
        KnowledgeItem(1, "positive_rate", 0.1, 0.3, weight=0.0)
    with pytest.raises(ConfigurationError):
        KnowledgeItem(1, "label_entropy", 0.1, 0.3)


def test_knowledge_base_validation():
    item = KnowledgeItem(1, Predicate.POSITIVE_RATE, 0.2, 0.3)
    with pytest.raises(ConfigurationError):
        KnowledgeBase(())
    with pytest.raises(ConfigurationError):
        KnowledgeBase((item, item))
    with pytest.raises(ConfigurationError):
        KnowledgeBase((item, KnowledgeItem(2, Predicate.POSITIVE_RATE, 0.1, 0.2)))


def test_knowledge_base_lookup():
    kb = make_kb()
    assert len(kb) == 4
    assert kb.item_for(Predicate.BOUNDARY_DENSITY).id == 4
    only_rate = items_from_records([("positive_rate", 0.2, 0.3, 1.0)])
    assert only_rate.item_for(Predicate.BOUNDARY_DENSITY) is None
    with pytest.raises(ConfigurationError):
        only_rate.require(Predicate.BOUNDARY_DENSITY)


def brute_force_statistics(labels, first_feature, window=None):
    hard = [label >= 0.5 for label in labels]
    rate = sum(hard) / len(hard)

    runs, current = [], 0
    for value in (hard if window is None else hard[:window]) + [False]:
        if value:
            current += 1
        elif current:
            runs.append(current)
            current = 0
    run_length = sum(runs) / len(runs) if runs else 0.0

    positives = [x for x, value in zip(first_feature, hard) if value]
    negatives = [x for x, value in zip(first_feature, hard) if not value]
    if positives and negatives:
        gap = abs(math.fsum(positives) / len(positives) - math.fsum(negatives) / len(negatives))
    else:
        gap = 0.0

    changes = sum(1 for left, right in zip(hard, hard[1:]) if left != right)
    boundary = changes / (len(hard) - 1) if len(hard) > 1 else 0.0
    return {
        Predicate.POSITIVE_RATE: rate,
        Predicate.MEAN_POSITIVE_RUN_LENGTH: run_length,
        Predicate.POSITIVE_FEATURE_MEAN_GAP: gap,
        Predicate.BOUNDARY_DENSITY: boundary,
    }


def test_statistics_match_brute_force_bit_for_bit():
    rng = np.random.default_rng(31)
    for trial in range(200):
        n = int(rng.integers(1, 13))
        labels = rng.random(n)
        if trial % 3 == 0:
            labels = np.round(labels)
        features = rng.normal(size=(n, 2)).tolist()
        window = None if trial % 4 else int(rng.integers(1, 13))
        sample = make_sample(1, labels.tolist(), features)
        params = GroundingParams(run_length_window=window)
        expected = brute_force_statistics(sample.labels, [row[0] for row in features], window)
        for predicate in Predicate:
            assert compute_statistic(predicate, sample, params) == expected[predicate], (trial, predicate)
        other = make_sample(2, [1.0 - label for label in labels.tolist()], features, first_id=100)
        groundings = extract_groundings(make_dns(sample, other), params)
        assert groundings.value_of(1, Predicate.POSITIVE_FEATURE_MEAN_GAP) == expected[
            Predicate.POSITIVE_FEATURE_MEAN_GAP
        ]
