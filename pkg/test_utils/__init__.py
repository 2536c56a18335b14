"""
Test utilities.

Since pytest discourages putting __init__.py into testdirectory
(i.e. making tests a package) one cannot import from anywhere
under tests folder. However, some utility classes/methods might be useful
in multiple test modules (sample factories, gradient checks, small configs).

So this package is the place to put them.
"""
import numpy as np

from noisy_targets.config import ExperimentConfig
from noisy_targets.dns_core import DiverseNoisySamples, Instance, NoisySample
from noisy_targets.knowledge import items_from_records
from noisy_targets.learner import OptimConfig
from noisy_targets.synth import TaskSpec


def make_sample(sample_id, labels, features=None, first_id=1):
    """
    Noisy sample with consecutive instance ids from ``first_id``.

    Without ``features`` instance ``i`` gets ``(i, 0.0)``.
    """
    labels = [float(label) for label in labels]
    if features is None:
        features = [(float(row), 0.0) for row in range(len(labels))]
    instances = tuple(
        Instance(first_id + row, tuple(values), sample_id) for row, values in enumerate(features)
    )
    return NoisySample(sample_id, instances, tuple(labels))


def random_sample(rng, sample_id, n, rate, first_id=1, dimension=2):
    labels = (rng.random(n) < rate).astype(float)
    features = rng.normal(size=(n, dimension))
    return make_sample(sample_id, labels, features.tolist(), first_id=first_id)


def make_dns(*samples):
    return DiverseNoisySamples(tuple(samples))


def make_kb(rate=(0.25, 0.35), run_length=(1.3, 1.6), gap=(1.8, 2.2), boundary=(0.37, 0.47)):
    return items_from_records([
        ("positive_rate", *rate, 1.0),
        ("mean_positive_run_length", *run_length, 1.0),
        ("positive_feature_mean_gap", *gap, 1.0),
        ("boundary_density", *boundary, 1.0),
    ])


def finite_difference_gradient(func, vector, step=1e-6):
    """
    Central-difference gradient of scalar ``func`` at ``vector``.
    """
    vector = np.asarray(vector, dtype=float)
    gradient = np.zeros_like(vector)
    for index in range(vector.size):
        forward = vector.copy()
        backward = vector.copy()
        forward[index] += step
        backward[index] -= step
        gradient[index] = (func(forward) - func(backward)) / (2.0 * step)
    return gradient


def small_config(**overrides):
    """
    A three-source experiment small enough for end-to-end tests.
    """
    values = {
        "task": TaskSpec(n_per_sample=(300, 300, 300)),
        "optim": OptimConfig(epochs=5, batch_size=32),
        "seeds": (0, 1),
    }
    values.update(overrides)
    return ExperimentConfig(**values)
