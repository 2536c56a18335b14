#!/usr/bin/env python
"""
Tests for the `noisy-targets` dns_core module.
"""
import itertools
import math

import numpy as np
import pytest

from noisy_targets.dns_core import (
    DiverseNoisySamples,
    DiversityParams,
    Instance,
    NoisySample,
    differentiate_instances,
    differentiate_labels,
    diversity,
    mean_nearest_distance,
    non_diverse_pairs,
    validate_dns,
)
from noisy_targets.exceptions import (
    ConfigurationError,
    DiversityViolationError,
    InvalidInputError,
    TooFewSamplesError,
)
from test_utils import make_dns, make_sample, random_sample

PARAMS = DiversityParams()


def test_noisy_sample_rejects_bad_structure():
    with pytest.raises(InvalidInputError):
        NoisySample(1, (), ())
    with pytest.raises(InvalidInputError):
        NoisySample(1, (Instance(1, (0.0,), 1),), (0.0, 1.0))
    with pytest.raises(InvalidInputError):
        make_sample(1, [0.0, 1.5])
    with pytest.raises(InvalidInputError):
        NoisySample(1, (Instance(1, (0.0,), 1), Instance(1, (1.0,), 1)), (0.0, 1.0))
    with pytest.raises(InvalidInputError):
        NoisySample(1, (Instance(1, (0.0,), 1), Instance(2, (1.0, 2.0), 1)), (0.0, 1.0))


def test_instance_rejects_non_finite_features():
    with pytest.raises(InvalidInputError):
        Instance(1, (float("nan"),), 1)


def test_sample_views():
    sample = make_sample(4, [1, 0, 0.7, 0.2])
    assert sample.size == 4
    assert sample.dimension == 2
    assert sample.ids == (1, 2, 3, 4)
    assert sample.positive_rate == 0.5
    assert sample.hard_label_map() == {1: True, 2: False, 3: True, 4: False}
    assert sample.features.shape == (4, 2)
    with pytest.raises(ValueError):
        sample.features[0, 0] = 5.0


def test_diversity_params_validation():
    with pytest.raises(ConfigurationError):
        DiversityParams(instance_threshold=-1.0)
    with pytest.raises(ConfigurationError):
        DiversityParams(label_threshold=1.5)


def test_collection_requires_unique_ids_and_one_dimension():
    with pytest.raises(InvalidInputError):
        make_dns(make_sample(1, [0, 1]), make_sample(1, [1, 0], first_id=10))
    with pytest.raises(InvalidInputError):
        make_dns(make_sample(1, [0, 1]), make_sample(2, [1, 0], features=[(0.0,), (1.0,)]))
    with pytest.raises(InvalidInputError):
        DiverseNoisySamples(())


def test_collection_lookup():
    dns = make_dns(make_sample(1, [0, 1]), make_sample(2, [1, 1, 1], first_id=3))
    assert dns.d == 2
    assert dns.sample_ids == (1, 2)
    assert dns.total_instances == 5
    assert dns.restricted_to(2).sample_ids == (2,)
    with pytest.raises(InvalidInputError):
        dns.sample(9)


def test_mean_nearest_distance_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.normal(size=(rng.integers(1, 12), 3))
        b = rng.normal(size=(rng.integers(1, 12), 3))
        expected = np.mean([min(np.linalg.norm(row - other) for other in b) for row in a])
        assert mean_nearest_distance(a, b) == pytest.approx(expected, abs=1e-7)


def test_differentiate_instances():
    labels = [0, 1, 0, 1]
    same = make_sample(1, labels)
    assert differentiate_instances(same, make_sample(2, labels), PARAMS) == 0
    assert differentiate_instances(same, make_sample(2, labels, first_id=100), PARAMS) == 1
    shifted = make_sample(2, labels, features=[(row + 1.0, 0.0) for row in range(4)])
    assert differentiate_instances(same, shifted, PARAMS) == 1


def test_differentiate_instances_rejects_dimension_mismatch():
    narrow = make_sample(2, [0, 1], features=[(0.0,), (1.0,)], first_id=10)
    with pytest.raises(InvalidInputError):
        differentiate_instances(make_sample(1, [0, 1]), narrow, PARAMS)


def test_differentiate_labels():
    base = make_sample(1, [1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
    # rates 0.2 vs 0.5
    assert differentiate_labels(base, make_sample(2, [1] * 5 + [0] * 5), PARAMS) == 1
    # equal rates, but the positives sit on other shared ids
    assert differentiate_labels(base, make_sample(2, [0, 0, 1, 1, 0, 0, 0, 0, 0, 0]), PARAMS) == 1
    assert differentiate_labels(base, make_sample(2, list(base.labels)), PARAMS) == 0
    # equal rates on disjoint ids
    assert differentiate_labels(base, make_sample(2, list(base.labels), first_id=50), PARAMS) == 0


def test_diversity_is_symmetric_and_binary():
    rng = np.random.default_rng(3)
    samples = [random_sample(rng, index, 30, rate, first_id=1 + 15 * index)
               for index, rate in enumerate((0.2, 0.25, 0.5, 0.8), start=1)]
    for a, b in itertools.product(samples, repeat=2):
        value = diversity(a, b, PARAMS)
        assert value in (0, 1)
        assert value == diversity(b, a, PARAMS)
        assert value == differentiate_instances(a, b, PARAMS) * differentiate_labels(a, b, PARAMS)


def test_non_diverse_pairs_lists_pairs_in_order():
    first = make_sample(1, [0, 1, 0, 1])
    copy = make_sample(2, [0, 1, 0, 1])
    other = make_sample(3, [1, 1, 1, 1], first_id=10)
    assert non_diverse_pairs([first, copy, other], PARAMS) == [(0, 1)]


def test_validate_dns_accepts_diverse_samples():
    rng = np.random.default_rng(0)
    samples = [random_sample(rng, 1, 100, 0.2), random_sample(rng, 2, 100, 0.6, first_id=101)]
    dns = validate_dns(samples, PARAMS)
    assert dns.sample_ids == (1, 2)


def test_validate_dns_needs_two_samples():
    with pytest.raises(TooFewSamplesError):
        validate_dns([make_sample(1, [0, 1])], PARAMS)
    with pytest.raises(TooFewSamplesError):
        validate_dns([], PARAMS)


def test_validate_dns_names_duplicated_sample():
    sample = make_sample(1, [0, 1, 1, 0])
    with pytest.raises(DiversityViolationError) as info:
        validate_dns([sample, sample], PARAMS)
    assert info.value.positions == [(0, 1)]
    assert info.value.pairs == [(1, 1)]
    assert "positions (0, 1)" in str(info.value)
    assert info.value.exit_code == 4


def test_validate_dns_names_every_violating_pair():
    a = make_sample(1, [0, 1, 1, 0])
    b = make_sample(2, [0, 1, 1, 0])
    c = make_sample(3, [0, 1, 1, 0])
    with pytest.raises(DiversityViolationError) as info:
        validate_dns([a, b, c], PARAMS)
    assert info.value.positions == [(0, 1), (0, 2), (1, 2)]
    assert info.value.pairs == [(1, 2), (1, 3), (2, 3)]


def brute_force_diversity(a, b, params):
    """
    Diversity recomputed with plain loops over instances and labels.
    """
    same_instances = sorted(a.ids) == sorted(b.ids)
    if same_instances:
        rows_a = [instance.features for instance in a.instances]
        rows_b = [instance.features for instance in b.instances]
        forward = sum(min(math.dist(row, other) for other in rows_b) for row in rows_a) / len(rows_a)
        backward = sum(min(math.dist(row, other) for other in rows_a) for row in rows_b) / len(rows_b)
        same_instances = (forward + backward) / 2.0 <= params.instance_threshold
    hard_a = {instance.id: label >= 0.5 for instance, label in zip(a.instances, a.labels)}
    hard_b = {instance.id: label >= 0.5 for instance, label in zip(b.instances, b.labels)}
    rate_a = sum(hard_a.values()) / len(hard_a)
    rate_b = sum(hard_b.values()) / len(hard_b)
    if abs(rate_a - rate_b) > params.label_threshold:
        labels_differ = True
    else:
        shared = [instance_id for instance_id in hard_a if instance_id in hard_b]
        disagreements = sum(1 for instance_id in shared if hard_a[instance_id] != hard_b[instance_id])
        labels_differ = bool(shared) and disagreements / len(shared) > params.label_threshold
    return int(not same_instances and labels_differ)


def relabeled(rng, sample, sample_id, flip):
    labels = [1.0 - label if rng.random() < flip else label for label in sample.labels]
    instances = tuple(Instance(instance.id, instance.features, sample_id) for instance in sample.instances)
    return NoisySample(sample_id, instances, tuple(labels))


def random_partner(rng, sample, sample_id):
    """
    A second sample that shares nothing, shares instances, or copies ``sample``.
    """
    kind = int(rng.integers(4))
    if kind == 0:
        return random_sample(rng, sample_id, int(rng.integers(3, 20)), float(rng.random()), first_id=500)
    if kind == 1:
        return relabeled(rng, sample, sample_id, float(rng.random()))
    if kind == 2:
        return relabeled(rng, sample, sample_id, 0.0)
    moved = [tuple(value + 1.0 for value in instance.features) for instance in sample.instances]
    return make_sample(sample_id, list(sample.labels), moved, first_id=sample.instances[0].id)


def test_diversity_laws_on_a_thousand_random_pairs():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        a = random_sample(rng, 1, int(rng.integers(3, 20)), float(rng.random()))
        b = random_partner(rng, a, 2)
        value = diversity(a, b, PARAMS)
        assert value == diversity(b, a, PARAMS), trial
        assert value == differentiate_instances(a, b, PARAMS) * differentiate_labels(a, b, PARAMS), trial
        assert value == brute_force_diversity(a, b, PARAMS), trial
        assert diversity(a, a, PARAMS) == 0, trial


def test_validate_dns_agrees_with_pairwise_oracle():
    rng = np.random.default_rng(99)
    accepted = rejected = 0
    for trial in range(100):
        first = random_sample(rng, 1, int(rng.integers(3, 15)), float(rng.random()))
        samples = [first]
        for sample_id in range(2, int(rng.integers(2, 6)) + 1):
            samples.append(random_partner(rng, samples[int(rng.integers(len(samples)))], sample_id))
        expected = [
            (i, j) for (i, a), (j, b) in itertools.combinations(enumerate(samples), 2)
            if brute_force_diversity(a, b, PARAMS) == 0
        ]
        if expected:
            rejected += 1
            with pytest.raises(DiversityViolationError) as info:
                validate_dns(samples, PARAMS)
            assert info.value.positions == expected, trial
        else:
            accepted += 1
            assert validate_dns(samples, PARAMS).sample_ids == tuple(sample.id for sample in samples)
    assert accepted and rejected
