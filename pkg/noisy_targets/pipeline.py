"""
End-to-end orchestration: generate, abduce, train, evaluate and compare.

Each stage can run in-process as part of :func:`run_pipeline` or on its own
from the files the previous stage left in an output directory.
"""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from noisy_targets.config import DEFAULT_OUTPUT_DIR, ExperimentConfig, dump_config
from noisy_targets.dns_core import DiverseNoisySamples, NoisySample, validate_dns
from noisy_targets.exceptions import ConstraintViolationError, NoisyTargetsError, StageError
from noisy_targets.knowledge import KnowledgeBase, extract_groundings
from noisy_targets.learner import LossConfig, TrainReport, predict_batch, train
from noisy_targets.reasoning import abduce_revisions, estimate_inconsistencies
from noisy_targets.serialization import (
    atomic_write_text,
    read_checkpoint,
    read_dataset,
    read_knowledge_base,
    read_predictions,
    read_targets,
    revision_report,
    write_checkpoint,
    write_dataset,
    write_json,
    write_knowledge_base,
    write_predictions,
    write_summary_csv,
    write_targets,
    write_truth,
)
from noisy_targets.signals import seed_aborted, stage_completed
from noisy_targets.synth import Metrics, evaluate, generate_task, generate_test_split
from noisy_targets.targets import RearrangedTargets, abduce_targets, rearrange_targets

logger = logging.getLogger(__name__)

MULTI_SOURCE = "osamtl_dns"
SINGLE_SOURCE = "osamtl_single_sample_d"
POOLED = "raw_noisy_pooled"
METHODS = (MULTI_SOURCE, SINGLE_SOURCE, POOLED)

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")
SUMMARY_COLUMNS = ("seed", "method", "status", *METRIC_NAMES, "failed_stage")

DATASET_FILE = "dataset.txt"
KB_FILE = "kb.txt"
TRUTH_FILE = "truth.txt"
TEST_FILE = "test.txt"
CONFIG_FILE = "config.yaml"
REVISIONS_FILE = "revisions.json"
TARGETS_FILE = "targets.txt"
MODEL_FILE = "model.txt"
TRAIN_REPORT_FILE = "train_report.json"
PREDICTIONS_FILE = "predictions.txt"
METRICS_FILE = "metrics.json"
REPORT_FILE = "report.json"
SUMMARY_FILE = "summary.csv"
TIMINGS_FILE = "timings.json"


@dataclass(frozen=True)
class MethodResult:
    method: str
    metrics: Metrics
    train_time: float = 0.0
    detail: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class SeedFailure:
    stage: str
    error_type: str
    message: str
    exit_code: int


@dataclass(frozen=True)
class SeedResult:
    seed: int
    results: Tuple[MethodResult, ...] = ()
    failure: Optional[SeedFailure] = None

    def result_for(self, method) -> Optional[MethodResult]:
        for result in self.results:
            if result.method == method:
                return result
        return None


@dataclass(frozen=True)
class ComparisonReport:
    """
    Per-seed, per-method metrics of one experiment.

    Wall times are kept out of :meth:`to_dict` so that two runs of the same
    config serialize to identical bytes; :meth:`timings` holds them instead.
    """

    seeds: Tuple[int, ...]
    seed_results: Tuple[SeedResult, ...]
    config: Dict[str, object] = field(default_factory=dict)

    def failed_seeds(self) -> List[int]:
        return [result.seed for result in self.seed_results if result.failure is not None]

    def first_failure(self) -> Optional[SeedFailure]:
        for result in self.seed_results:
            if result.failure is not None:
                return result.failure
        return None

    def cells(self) -> List[dict]:
        """
        One record per (seed, method), failed seeds included.
        """
        cells = []
        for seed_result in self.seed_results:
            for method in METHODS:
                result = seed_result.result_for(method)
                cell = {"seed": seed_result.seed, "method": method}
                if result is None:
                    failure = seed_result.failure
                    cell.update(
                        status="failed",
                        metrics=None,
                        detail={},
                        failure=dataclasses.asdict(failure) if failure else None,
                    )
                else:
                    cell.update(
                        status="ok",
                        metrics=dataclasses.asdict(result.metrics),
                        detail=dict(result.detail),
                        failure=None,
                    )
                cells.append(cell)
        return cells

    def aggregates(self) -> Dict[str, Optional[dict]]:
        """
        Mean and population standard deviation of each metric over successful seeds.
        """
        summary = {}
        for method in METHODS:
            results = [r for r in (s.result_for(method) for s in self.seed_results) if r is not None]
            if not results:
                summary[method] = None
                continue
            summary[method] = {"seeds": len(results)}
            for name in METRIC_NAMES:
                values = np.array([getattr(result.metrics, name) for result in results])
                summary[method][name] = {"mean": float(values.mean()), "std": float(values.std())}
        return summary

    def timings(self) -> List[dict]:
        return [
            {"seed": seed_result.seed, "method": result.method, "train_time": result.train_time}
            for seed_result in self.seed_results
            for result in seed_result.results
        ]

    def summary_rows(self) -> List[dict]:
        rows = []
        for cell in self.cells():
            metrics = cell["metrics"] or {}
            failure = cell["failure"] or {}
            row = {"seed": cell["seed"], "method": cell["method"], "status": cell["status"]}
            row.update({name: metrics.get(name) for name in METRIC_NAMES})
            row["failed_stage"] = failure.get("stage")
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": list(self.seeds),
            "cells": self.cells(),
            "aggregates": self.aggregates(),
        }


@dataclass(frozen=True, eq=False)
class AbductionResult:
    dns: DiverseNoisySamples
    report: dict
    rearranged: RearrangedTargets


@contextmanager
def stage(name, seed=None, scope=None):
    """
    Run a block as pipeline stage ``name``.

    The block may fill the yielded dict with a summary, sent with
    ``stage_completed`` when the block finishes. Package errors escaping the
    block are re-raised as :class:`StageError` carrying the stage name.
    """
    summary = {} if scope is None else {"scope": scope}
    try:
        yield summary
    except StageError:
        raise
    except NoisyTargetsError as error:
        raise StageError(name, error) from error
    stage_completed.send(sender=name, seed=seed, summary=summary)


def validated_samples(samples: Sequence[NoisySample], config: ExperimentConfig) -> DiverseNoisySamples:
    try:
        return validate_dns(samples, config.diversity)
    except ConstraintViolationError as error:
        if config.enforce_diversity:
            raise
        logger.warning("continuing with samples that failed diversity validation: %s", error)
        return DiverseNoisySamples(tuple(samples))


def abduce(dns: DiverseNoisySamples, kb: KnowledgeBase, config: ExperimentConfig, seed=None, scope=None):
    """
    Extract, estimate, revise, abduce targets and rearrange them for ``dns``.
    """
    with stage("extract_groundings", seed, scope) as summary:
        groundings = extract_groundings(dns, config.grounding)
        summary.update(groundings=len(groundings))
    with stage("estimate_inconsistencies", seed, scope) as summary:
        inconsistencies = estimate_inconsistencies(groundings, kb, config.reasoning)
        summary.update(inconsistencies=len(inconsistencies), total=inconsistencies.total)
    with stage("abduce_revisions", seed, scope) as summary:
        revised = abduce_revisions(inconsistencies, groundings, kb, config.abduction)
        summary.update(negated=sum(revised.negated_counts), size=revised.size)
    with stage("abduce_targets", seed, scope) as summary:
        target_set = abduce_targets(revised, dns, kb, config.targets)
        summary.update(targets=target_set.m)
    with stage("rearrange_targets", seed, scope) as summary:
        rearranged = rearrange_targets(target_set, dns, config.rearrangement)
        summary.update(n=rearranged.n, p=rearranged.p)
    return AbductionResult(dns, revision_report(groundings, inconsistencies, revised), rearranged)


def _optim_for(config: ExperimentConfig, seed):
    return dataclasses.replace(config.optim, seed=config.optim.seed + seed)


def fit(features, targets, loss: LossConfig, config: ExperimentConfig, seed, scope=None) -> TrainReport:
    with stage("train", seed, scope) as summary:
        initial = config.model.initialize(features.shape[1], seed=config.optim.seed + seed)
        report = train(initial, features, targets, loss, _optim_for(config, seed))
        summary.update(final_loss=report.loss_per_epoch[-1], epochs=len(report.loss_per_epoch))
    return report


def score(report: TrainReport, test: NoisySample, config: ExperimentConfig, seed, scope=None) -> Metrics:
    with stage("evaluate", seed, scope) as summary:
        predictions = dict(zip(test.ids, predict_batch(report.final_params, test.features).tolist()))
        truth = {instance_id: int(label) for instance_id, label in zip(test.ids, test.hard_labels)}
        metrics = evaluate(predictions, truth, config.evaluation_threshold)
        summary.update(f1=metrics.f1)
    return metrics


def _method(name, report: TrainReport, metrics: Metrics, **detail):
    return MethodResult(name, metrics, report.wall_time, detail)


def run_seed(config: ExperimentConfig, seed) -> SeedResult:
    """
    All three methods on one generated task; any stage error aborts the seed.
    """
    try:
        with stage("generate", seed) as summary:
            task = generate_task(config.task, seed)
            test = generate_test_split(config.task, seed, config.test_size)
            summary.update(instances=task.dns.total_instances, test_instances=test.size)
        with stage("validate_dns", seed) as summary:
            dns = validated_samples(task.dns.samples, config)
            summary.update(d=dns.d)

        results = []
        combined = abduce(dns, task.kb, config, seed, scope=MULTI_SOURCE)
        report = fit(combined.rearranged.features, combined.rearranged.targets, config.loss, config, seed,
                     scope=MULTI_SOURCE)
        results.append(_method(MULTI_SOURCE, report, score(report, test, config, seed, MULTI_SOURCE)))

        best = None
        per_sample = {}
        for sample_id in dns.sample_ids:
            scope = f"{SINGLE_SOURCE}:{sample_id}"
            single = abduce(dns.restricted_to(sample_id), task.kb, config, seed, scope=scope)
            report = fit(single.rearranged.features, single.rearranged.targets, config.loss, config, seed, scope)
            metrics = score(report, test, config, seed, scope)
            per_sample[str(sample_id)] = metrics.f1
            if best is None or metrics.f1 > best[2].f1:
                best = (sample_id, report, metrics)
        results.append(_method(SINGLE_SOURCE, best[1], best[2], best_sample=best[0], f1_per_sample=per_sample))

        features = np.vstack([sample.features for sample in dns])
        labels = np.concatenate([sample.label_array for sample in dns])[:, None]
        pooled_loss = LossConfig(config.loss.base_loss, (1.0,))
        report = fit(features, labels, pooled_loss, config, seed, scope=POOLED)
        results.append(_method(POOLED, report, score(report, test, config, seed, POOLED)))
        return SeedResult(seed, tuple(results))
    except StageError as error:
        seed_aborted.send(sender=error.stage, seed=seed, error=error.cause)
        logger.warning("seed %s aborted: %s", seed, error)
        failure = SeedFailure(error.stage, type(error.cause).__name__, str(error.cause), error.exit_code)
        return SeedResult(seed, (), failure)


def run_pipeline(config: ExperimentConfig, jobs=1, write=True) -> ComparisonReport:
    """
    Run every seed of ``config`` and optionally write the report files.

    Seeds run in up to ``jobs`` worker threads; results keep the seed order.
    """
    run = partial(run_seed, config)
    if jobs > 1 and len(config.seeds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            seed_results = tuple(executor.map(run, config.seeds))
    else:
        seed_results = tuple(run(seed) for seed in config.seeds)
    echo = config.to_dict()
    # the same experiment written elsewhere must serialize identically
    echo.pop("output_dir")
    report = ComparisonReport(config.seeds, seed_results, echo)
    if write:
        write_report(report, config.output_dir or DEFAULT_OUTPUT_DIR)
    return report


def write_report(report: ComparisonReport, output_dir):
    output_dir = Path(output_dir)
    write_json(output_dir / REPORT_FILE, report.to_dict())
    write_summary_csv(output_dir / SUMMARY_FILE, report.summary_rows(), SUMMARY_COLUMNS)
    write_json(output_dir / TIMINGS_FILE, report.timings())


def generate_stage(config: ExperimentConfig, seed, output_dir):
    """
    Write the generated dataset, knowledge base, truth and held-out split.
    """
    output_dir = Path(output_dir)
    with stage("generate", seed) as summary:
        task = generate_task(config.task, seed)
        test = generate_test_split(config.task, seed, config.test_size)
        write_dataset(output_dir / DATASET_FILE, task.dns.samples)
        write_knowledge_base(output_dir / KB_FILE, task.kb)
        write_truth(output_dir / TRUTH_FILE, task.truth)
        write_dataset(output_dir / TEST_FILE, [test])
        atomic_write_text(output_dir / CONFIG_FILE, dump_config(config))
        summary.update(instances=task.dns.total_instances, test_instances=test.size)
    return task, test


def abduce_stage(config: ExperimentConfig, seed, output_dir) -> AbductionResult:
    """
    Abduce and rearrange targets from the files written by :func:`generate_stage`.
    """
    output_dir = Path(output_dir)
    with stage("validate_dns", seed):
        samples = read_dataset(output_dir / DATASET_FILE)
        kb = read_knowledge_base(output_dir / KB_FILE)
        dns = validated_samples(samples, config)
    result = abduce(dns, kb, config, seed)
    write_json(output_dir / REVISIONS_FILE, result.report)
    write_targets(output_dir / TARGETS_FILE, result.rearranged)
    return result


def train_stage(config: ExperimentConfig, seed, output_dir) -> TrainReport:
    output_dir = Path(output_dir)
    with stage("load_targets", seed):
        samples = read_dataset(output_dir / DATASET_FILE)
        rearranged = read_targets(output_dir / TARGETS_FILE, samples)
    report = fit(rearranged.features, rearranged.targets, config.loss, config, seed)
    write_checkpoint(output_dir / MODEL_FILE, report.final_params)
    write_json(output_dir / TRAIN_REPORT_FILE, {"loss_per_epoch": list(report.loss_per_epoch)})
    write_json(output_dir / TIMINGS_FILE, [{"seed": seed, "method": "train", "train_time": report.wall_time}])
    return report


def evaluate_stage(config: ExperimentConfig, seed, output_dir, predictions_path=None) -> Metrics:
    """
    Score predictions on the held-out split.

    Without ``predictions_path`` the stored model predicts the split first and
    its predictions are written next to the metrics.
    """
    output_dir = Path(output_dir)
    with stage("evaluate", seed) as summary:
        (test,) = read_dataset(output_dir / TEST_FILE)
        truth = {instance_id: int(label) for instance_id, label in zip(test.ids, test.hard_labels)}
        if predictions_path is None:
            params = read_checkpoint(output_dir / MODEL_FILE)
            predictions = dict(zip(test.ids, predict_batch(params, test.features).tolist()))
            write_predictions(output_dir / PREDICTIONS_FILE, predictions)
        else:
            predictions = read_predictions(predictions_path)
        metrics = evaluate(predictions, truth, config.evaluation_threshold)
        write_json(output_dir / METRICS_FILE, dataclasses.asdict(metrics))
        summary.update(f1=metrics.f1)
    return metrics
