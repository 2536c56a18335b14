"""
On-disk formats of stage files.

All text formats are space-separated, one record per line; blank lines and
lines starting with ``#`` are ignored. Reals are written with ``repr`` so they
read back bit-identical. Every write goes to a temporary file in the target
directory first and is renamed into place.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from noisy_targets.dns_core import Instance, NoisySample
from noisy_targets.exceptions import DataFileError, InvalidInputError, NoisyTargetsError, ParseError
from noisy_targets.knowledge import GroundingSet, KnowledgeBase, KnowledgeItem, Predicate
from noisy_targets.learner import Architecture, Layer, ModelParams
from noisy_targets.reasoning import InconsistencySet, RevisedGroundingSet
from noisy_targets.targets import RearrangedTargets


def real(value) -> str:
    return repr(float(value))


def atomic_write_text(path, text):
    """
    Write ``text`` to ``path`` through a temporary file and a rename.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, "w", encoding="utf8", newline="\n") as stream:
            stream.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise


def write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(path)
    try:
        return json.loads(path.read_text(encoding="utf8"))
    except json.JSONDecodeError as error:
        raise ParseError(path, error.lineno, error.msg) from error


def _records(path) -> Iterator[Tuple[int, List[str]]]:
    """
    ``(line number, fields)`` of every record line in ``path``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataFileError(path)
    with path.open(encoding="utf8") as stream:
        for number, line in enumerate(stream, start=1):
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                yield number, stripped.split()


def _number(path, line, text, kind=float):
    try:
        return kind(text)
    except ValueError as error:
        raise ParseError(path, line, f"expected {kind.__name__}, got {text!r}") from error


def _expect_fields(path, line, fields, count):
    if len(fields) != count:
        raise ParseError(path, line, f"expected {count} fields, got {len(fields)}")


def write_dataset(path, samples: Iterable[NoisySample]):
    """
    One block per sample: ``sample_id n feature_dim`` then ``instance_id f_1 .. f_k label`` rows.
    """
    lines = []
    for sample in samples:
        lines.append(f"{sample.id} {sample.size} {sample.dimension}")
        for instance, label in zip(sample.instances, sample.labels):
            values = " ".join(real(value) for value in (*instance.features, label))
            lines.append(f"{instance.id} {values}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path) -> List[NoisySample]:
    samples = []
    records = _records(path)
    for line, header in records:
        _expect_fields(path, line, header, 3)
        sample_id, size, dimension = (_number(path, line, text, int) for text in header)
        instances, labels = [], []
        for _ in range(size):
            try:
                line, fields = next(records)
            except StopIteration:
                raise ParseError(path, line, f"sample {sample_id} ends after {len(instances)} of {size} rows") from None
            _expect_fields(path, line, fields, dimension + 2)
            values = [_number(path, line, text) for text in fields[1:]]
            instances.append(Instance(_number(path, line, fields[0], int), tuple(values[:-1]), sample_id))
            labels.append(values[-1])
        try:
            samples.append(NoisySample(sample_id, tuple(instances), tuple(labels)))
        except InvalidInputError as error:
            raise ParseError(path, line, str(error)) from error
    if not samples:
        raise ParseError(path, 0, "no samples found")
    return samples


def write_knowledge_base(path, kb: KnowledgeBase):
    lines = [
        f"{item.predicate.value} {real(item.admissible_lo)} {real(item.admissible_hi)} {real(item.weight)}"
        for item in kb
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_knowledge_base(path) -> KnowledgeBase:
    items = []
    for line, fields in _records(path):
        _expect_fields(path, line, fields, 4)
        try:
            predicate = Predicate.parse(fields[0])
            lo, hi, weight = (_number(path, line, text) for text in fields[1:])
            items.append(KnowledgeItem(len(items) + 1, predicate, lo, hi, weight))
        except ParseError:
            raise
        except NoisyTargetsError as error:
            raise ParseError(path, line, str(error)) from error
    try:
        return KnowledgeBase(tuple(items))
    except NoisyTargetsError as error:
        raise ParseError(path, 0, str(error)) from error


def _write_pairs(path, pairs: Iterable[Tuple[int, float]], value_format):
    atomic_write_text(path, "".join(f"{key} {value_format(value)}\n" for key, value in pairs))


def _read_pairs(path, kind) -> Dict[int, float]:
    pairs = {}
    for line, fields in _records(path):
        _expect_fields(path, line, fields, 2)
        pairs[_number(path, line, fields[0], int)] = _number(path, line, fields[1], kind)
    return pairs


def write_truth(path, truth: Mapping[int, int]):
    _write_pairs(path, sorted(truth.items()), lambda label: str(int(label)))


def read_truth(path) -> Dict[int, int]:
    return _read_pairs(path, int)


def write_predictions(path, predictions: Mapping[int, float]):
    _write_pairs(path, predictions.items(), real)


def read_predictions(path) -> Dict[int, float]:
    return _read_pairs(path, float)


def write_targets(path, rearranged: RearrangedTargets):
    """
    Per instance: ``instance_id sample_index t_1 .. t_p``.
    """
    lines = [
        " ".join([str(instance.id), str(instance.sample_index), *(real(value) for value in labels)])
        for instance, labels in rearranged.rows()
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_targets(path, samples: Sequence[NoisySample]) -> RearrangedTargets:
    """
    Targets dump joined back onto the instances of ``samples``.
    """
    instances = {instance.id: instance for sample in samples for instance in sample.instances}
    ordered, rows = [], []
    width = None
    for line, fields in _records(path):
        if width is None:
            width = len(fields)
            if width < 3:
                raise ParseError(path, line, "target rows need an id, a sample index and at least one target")
        _expect_fields(path, line, fields, width)
        instance_id = _number(path, line, fields[0], int)
        if instance_id not in instances:
            raise ParseError(path, line, f"unknown instance {instance_id}")
        instance = instances[instance_id]
        sample_index = _number(path, line, fields[1], int)
        if sample_index != instance.sample_index:
            raise ParseError(
                path, line, f"instance {instance_id} belongs to sample {instance.sample_index}, not {sample_index}"
            )
        ordered.append(instance)
        rows.append([_number(path, line, text) for text in fields[2:]])
    if not rows:
        raise ParseError(path, 0, "no target rows found")
    return RearrangedTargets(tuple(ordered), np.array(rows))


def write_checkpoint(path, params: ModelParams):
    """
    ``architecture feature_dim hidden_width`` then, per layer, a weight line and a bias line.
    """
    lines = [f"{params.architecture.value} {params.feature_dim} {params.hidden_width or 0}"]
    for layer in params.layers:
        lines.append(" ".join(real(value) for value in layer.weight.ravel()))
        lines.append(" ".join(real(value) for value in layer.bias))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_checkpoint(path) -> ModelParams:
    records = list(_records(path))
    if not records:
        raise ParseError(path, 0, "empty checkpoint")
    line, header = records[0]
    _expect_fields(path, line, header, 3)
    try:
        architecture = Architecture(header[0])
    except ValueError:
        raise ParseError(path, line, f"unknown architecture {header[0]!r}") from None
    feature_dim, hidden_width = (_number(path, line, text, int) for text in header[1:])
    shapes = [(1, feature_dim)] if architecture is Architecture.LINEAR else [(hidden_width, feature_dim),
                                                                               (1, hidden_width)]
    if len(records) != 1 + 2 * len(shapes):
        raise ParseError(path, records[-1][0], f"expected {2 * len(shapes)} parameter lines")
    layers = []
    for index, (rows, columns) in enumerate(shapes):
        (weight_line, weights), (bias_line, biases) = records[1 + 2 * index], records[2 + 2 * index]
        _expect_fields(path, weight_line, weights, rows * columns)
        _expect_fields(path, bias_line, biases, rows)
        layers.append(Layer(
            np.array([_number(path, weight_line, text) for text in weights]).reshape(rows, columns),
            np.array([_number(path, bias_line, text) for text in biases]),
        ))
    return ModelParams(architecture, tuple(layers))


def grounding_records(groundings: GroundingSet) -> List[dict]:
    return [
        {
            "id": grounding.id,
            "source_sample": grounding.source_sample,
            "predicate": grounding.predicate.value,
            "observed_value": grounding.observed_value,
            "polarity": grounding.polarity.value,
        }
        for grounding in groundings
    ]


def revision_report(
    groundings: GroundingSet, inconsistencies: InconsistencySet, revised: RevisedGroundingSet
) -> dict:
    """
    Kept, negated and added groundings with the magnitudes that caused each negation.
    """
    return {
        "groundings": grounding_records(groundings),
        "inconsistencies": [
            {"grounding_id": item.grounding_id, "knowledge_id": item.knowledge_id, "magnitude": item.magnitude}
            for item in inconsistencies
        ],
        "inconsistency_total": inconsistencies.total,
        "unmatched_groundings": list(inconsistencies.unmatched),
        "revisions": [
            {
                "id": entry.grounding.id,
                "source_sample": entry.grounding.source_sample,
                "predicate": entry.grounding.predicate.value,
                "value": entry.grounding.observed_value,
                "status": entry.status.value,
                "corrects": entry.corrects,
                "magnitude": entry.magnitude,
            }
            for entry in revised
        ],
        "counts": {
            "sample_ids": list(revised.sample_ids),
            "kept": list(revised.kept_counts),
            "added": list(revised.added_counts),
            "original": list(revised.original_counts),
            "size": revised.size,
        },
    }


def write_summary_csv(path, rows: Sequence[Mapping[str, object]], columns: Sequence[str]):
    frame = pd.DataFrame(list(rows), columns=list(columns))
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    atomic_write_text(path, buffer.getvalue())
