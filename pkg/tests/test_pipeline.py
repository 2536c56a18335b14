#!/usr/bin/env python
"""
Tests for the `noisy-targets` pipeline module.
"""
import json

import numpy as np
import pytest

from noisy_targets import pipeline
from noisy_targets.config import load_config
from noisy_targets.exceptions import DivergenceError, InvalidInputError, StageError
from noisy_targets.learner import LossConfig, OptimConfig
from noisy_targets.serialization import write_predictions
from noisy_targets.synth import NoiseProfile, TaskSpec
from noisy_targets.targets import TargetParams
from test_utils import small_config

CLEAN = TaskSpec(
    n_per_sample=(300, 300, 300),
    signal_separation=6.0,
    noise_profiles=(NoiseProfile(), NoiseProfile(), NoiseProfile()),
)


@pytest.fixture(scope="module")
def report():
    return pipeline.run_pipeline(small_config(), write=False)


def test_report_has_a_cell_per_seed_and_method(report):
    cells = report.cells()
    assert [(cell["seed"], cell["method"]) for cell in cells] == [
        (seed, method) for seed in (0, 1) for method in pipeline.METHODS
    ]
    assert all(cell["status"] == "ok" for cell in cells)
    assert report.failed_seeds() == []
    assert report.first_failure() is None


def test_method_keys_in_written_report(tmp_path):
    assert pipeline.METHODS == ("osamtl_dns", "osamtl_single_sample_d", "raw_noisy_pooled")
    pipeline.run_pipeline(small_config(seeds=(0,), output_dir=str(tmp_path)))
    payload = json.loads((tmp_path / pipeline.REPORT_FILE).read_text(encoding="utf8"))
    assert list(payload["aggregates"]) == list(pipeline.METHODS)
    assert [cell["method"] for cell in payload["cells"]] == list(pipeline.METHODS)
    rows = (tmp_path / pipeline.SUMMARY_FILE).read_text(encoding="utf8").splitlines()[1:]
    assert [row.split(",")[1] for row in rows] == list(pipeline.METHODS)


def test_report_metrics_and_aggregates(report):
    aggregates = report.aggregates()
    assert set(aggregates) == set(pipeline.METHODS)
    for summary in aggregates.values():
        assert summary["seeds"] == 2
        assert 0.0 <= summary["f1"]["mean"] <= 1.0
        assert summary["f1"]["std"] >= 0.0
    assert aggregates[pipeline.MULTI_SOURCE]["f1"]["mean"] > 0.5
    single = report.seed_results[0].result_for(pipeline.SINGLE_SOURCE)
    assert single.detail["best_sample"] in (1, 2, 3)
    assert set(single.detail["f1_per_sample"]) == {"1", "2", "3"}


def test_report_dict_leaves_out_wall_time(report):
    payload = json.dumps(report.to_dict(), sort_keys=True)
    assert "train_time" not in payload
    assert len(report.timings()) == 6
    assert all(entry["train_time"] >= 0.0 for entry in report.timings())


def test_written_report_is_byte_identical_across_runs(tmp_path):
    config = small_config(seeds=(3,))
    first = pipeline.run_pipeline(config.with_output_dir(tmp_path / "first"))
    second = pipeline.run_pipeline(config.with_output_dir(tmp_path / "second"), jobs=2)
    for name in (pipeline.REPORT_FILE, pipeline.SUMMARY_FILE):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()
    assert (tmp_path / "first" / pipeline.TIMINGS_FILE).is_file()
    assert first.to_dict() == second.to_dict()


def test_thread_pool_keeps_seed_order(report):
    threaded = pipeline.run_pipeline(small_config(), jobs=2, write=False)
    assert threaded.seeds == report.seeds
    assert threaded.to_dict() == report.to_dict()


def test_clean_labels_are_learned_almost_perfectly_by_every_method():
    config = small_config(task=CLEAN, seeds=(0,), enforce_diversity=False, optim=OptimConfig(epochs=40))
    result = pipeline.run_pipeline(config, write=False).seed_results[0]
    for method in pipeline.METHODS:
        assert result.result_for(method).metrics.f1 >= 0.95, method


def test_failed_stage_aborts_every_method_of_the_seed(tmp_path):
    config = small_config(
        targets=TargetParams(targets_per_sample=1),
        loss=LossConfig(alphas=(1.0,)),
        output_dir=str(tmp_path),
    )
    report = pipeline.run_pipeline(config)
    assert report.failed_seeds() == [0, 1]
    failure = report.first_failure()
    assert failure.stage == "rearrange_targets"
    assert failure.error_type == "TargetMultiplicityError"
    assert failure.exit_code == 4
    assert {cell["status"] for cell in report.cells()} == {"failed"}
    assert all(summary is None for summary in report.aggregates().values())
    summary = (tmp_path / pipeline.SUMMARY_FILE).read_text(encoding="utf8").splitlines()
    assert len(summary) == 1 + 2 * len(pipeline.METHODS)


def test_diversity_is_enforced_before_abduction():
    config = small_config(task=CLEAN, seeds=(0,))
    failure = pipeline.run_pipeline(config, write=False).first_failure()
    assert failure.stage == "validate_dns"
    assert failure.error_type == "DiversityViolationError"
    assert failure.exit_code == 4


def test_stage_wraps_package_errors():
    with pytest.raises(StageError) as info:
        with pipeline.stage("train", seed=0):
            raise DivergenceError(3, float("inf"))
    assert info.value.stage == "train"
    assert info.value.exit_code == 5
    with pytest.raises(KeyError):
        with pipeline.stage("train", seed=0):
            raise KeyError("not a package error")


def test_stages_run_from_files(tmp_path):
    config = small_config(seeds=(2,))
    task, test = pipeline.generate_stage(config, 2, tmp_path)
    for name in (pipeline.DATASET_FILE, pipeline.KB_FILE, pipeline.TRUTH_FILE, pipeline.TEST_FILE,
                 pipeline.CONFIG_FILE):
        assert (tmp_path / name).is_file()

    result = pipeline.abduce_stage(config, 2, tmp_path)
    assert result.rearranged.n == task.dns.total_instances
    revisions = json.loads((tmp_path / pipeline.REVISIONS_FILE).read_text(encoding="utf8"))
    assert revisions["counts"]["sample_ids"] == [1, 2, 3]

    report = pipeline.train_stage(config, 2, tmp_path)
    assert len(report.loss_per_epoch) == config.optim.epochs
    assert (tmp_path / pipeline.MODEL_FILE).is_file()

    metrics = pipeline.evaluate_stage(config, 2, tmp_path)
    assert (tmp_path / pipeline.PREDICTIONS_FILE).is_file()
    rescored = pipeline.evaluate_stage(config, 2, tmp_path, tmp_path / pipeline.PREDICTIONS_FILE)
    assert rescored == metrics
    assert test.size == config.test_size


def test_stage_files_are_deterministic(tmp_path):
    config = small_config(seeds=(1,))
    for run in ("a", "b"):
        pipeline.generate_stage(config, 1, tmp_path / run)
        pipeline.abduce_stage(config, 1, tmp_path / run)
        pipeline.train_stage(config, 1, tmp_path / run)
    for name in (pipeline.DATASET_FILE, pipeline.TARGETS_FILE, pipeline.MODEL_FILE, pipeline.TRAIN_REPORT_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_stage_needs_abduced_targets(tmp_path):
    config = small_config(seeds=(0,))
    pipeline.generate_stage(config, 0, tmp_path)
    with pytest.raises(StageError) as info:
        pipeline.train_stage(config, 0, tmp_path)
    assert info.value.stage == "load_targets"
    assert isinstance(info.value.cause, InvalidInputError)
    assert info.value.exit_code == 3


def test_abduction_from_files_matches_the_in_process_run(tmp_path):
    config = small_config(seeds=(5,))
    task, _ = pipeline.generate_stage(config, 5, tmp_path)
    from_files = pipeline.abduce_stage(config, 5, tmp_path)
    in_process = pipeline.abduce(task.dns, task.kb, config)
    assert from_files.report == in_process.report
    np.testing.assert_array_equal(from_files.rearranged.targets, in_process.rearranged.targets)


def test_predictions_equal_to_truth_score_perfectly(tmp_path):
    config = small_config(seeds=(0,))
    _, test = pipeline.generate_stage(config, 0, tmp_path)
    perfect = {instance_id: float(label) for instance_id, label in zip(test.ids, test.hard_labels)}
    write_predictions(tmp_path / "perfect.txt", perfect)
    metrics = pipeline.evaluate_stage(config, 0, tmp_path, tmp_path / "perfect.txt")
    assert metrics.f1 == 1.0
    assert metrics.accuracy == 1.0


@pytest.fixture(scope="module")
def default_report():
    return pipeline.run_pipeline(load_config(), write=False)


def test_multi_source_targets_beat_pooled_noisy_labels_on_the_default_task(default_report):
    assert default_report.failed_seeds() == []
    aggregates = default_report.aggregates()
    multi = aggregates[pipeline.MULTI_SOURCE]["f1"]["mean"]
    assert multi > aggregates[pipeline.POOLED]["f1"]["mean"]
    assert multi >= aggregates[pipeline.SINGLE_SOURCE]["f1"]["mean"] - 0.01
    wins = sum(
        1 for result in default_report.seed_results
        if result.result_for(pipeline.MULTI_SOURCE).metrics.f1 > result.result_for(pipeline.POOLED).metrics.f1
    )
    assert wins >= 6
