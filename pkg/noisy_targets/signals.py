"""
Pipeline signals and the receivers that log them as JSON events.
"""
import json
import logging
import sys

from django.dispatch import Signal, receiver
from django.utils import timezone

# log to stderr
logger = logging.getLogger(__name__)
stderr_handler = logging.StreamHandler(stream=sys.stderr)
stderr_handler.setFormatter(logging.Formatter("%(message)s"))
logger.setLevel(logging.INFO)
logger.addHandler(stderr_handler)


namespace = __name__

# sender is the stage name; kwargs: seed, summary
stage_completed = Signal()
# sender is the stage name; kwargs: seed, error
seed_aborted = Signal()
# sender is the command stage; kwargs: report
experiment_completed = Signal()


@receiver(stage_completed)
def emit_stage_event(sender, seed=None, summary=None, **kwargs):
    """emit_stage_event.

    :param sender: stage name
    :param seed: experiment seed
    :param summary: json-serializable stage summary
    :param kwargs:
    """
    _emit_event("stage_completed", {"stage": sender, **(summary or {})}, seed=seed)


@receiver(seed_aborted)
def emit_abort_event(sender, seed=None, error=None, **kwargs):
    """emit_abort_event.

    :param sender: stage name
    :param seed: experiment seed
    :param error: the exception that stopped the seed
    :param kwargs:
    """
    message = {
        "stage": sender,
        "error_type": type(error).__name__ if error is not None else None,
        "error": str(error) if error is not None else None,
    }
    _emit_event("seed_aborted", message, seed=seed)


@receiver(experiment_completed)
def emit_experiment_event(sender, report=None, **kwargs):
    """emit_experiment_event.

    :param sender:
    :param report: the comparison report
    :param kwargs:
    """
    message = {"stage": sender}
    if report is not None:
        message.update(seeds=list(report.seeds), failed_seeds=list(report.failed_seeds()))
    _emit_event("experiment_completed", message)


def _emit_event(name, message, seed=None):
    """_emit_event.

    :param name: event name
    :param message:
    :param seed:
    """
    event = {
        "event_type": f"{namespace}.{name}",
        "message": message,
        "seed": seed,
        "time": timezone.now().isoformat(),
    }
    logger.info(json.dumps(event, default=str))
