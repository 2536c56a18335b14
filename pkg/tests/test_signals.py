#!/usr/bin/env python
"""
Tests for the `noisy-targets` signals module.
"""
import json
import logging

import pytest

from noisy_targets import pipeline
from noisy_targets.exceptions import TargetMultiplicityError
from noisy_targets.signals import experiment_completed, seed_aborted, stage_completed


def events(caplog):
    return [json.loads(record.getMessage()) for record in caplog.records if record.name == "noisy_targets.signals"]


@pytest.fixture(autouse=True)
def info_logs(caplog):
    caplog.set_level(logging.INFO, logger="noisy_targets.signals")


def test_stage_completed_event(caplog):
    stage_completed.send(sender="abduce_targets", seed=3, summary={"targets": 2})
    (event,) = events(caplog)
    assert event["event_type"] == "noisy_targets.signals.stage_completed"
    assert event["message"] == {"stage": "abduce_targets", "targets": 2}
    assert event["seed"] == 3
    assert "time" in event


def test_seed_aborted_event(caplog):
    seed_aborted.send(sender="rearrange_targets", seed=1, error=TargetMultiplicityError("one target per instance"))
    (event,) = events(caplog)
    assert event["event_type"] == "noisy_targets.signals.seed_aborted"
    assert event["message"]["stage"] == "rearrange_targets"
    assert event["message"]["error_type"] == "TargetMultiplicityError"


def test_experiment_completed_event_without_report(caplog):
    experiment_completed.send(sender="compare")
    (event,) = events(caplog)
    assert event["message"] == {"stage": "compare"}
    assert event["seed"] is None


def test_the_stage_context_emits_one_event(caplog):
    with pipeline.stage("train", seed=7) as summary:
        summary["epochs"] = 2
    (event,) = events(caplog)
    assert event["message"]["stage"] == "train"
    assert event["message"]["epochs"] == 2
    assert event["seed"] == 7
