"""
Run the noisy-targets experiment, or one of its stages, from the command line.

    ./manage.py noisy_targets --config experiment.yaml --stage compare --jobs 4
    ./manage.py noisy_targets --stage generate --seed 3 --out runs/seed3
    ./manage.py noisy_targets --stage abduce --seed 3 --out runs/seed3
"""
import json

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from noisy_targets import pipeline
from noisy_targets.config import load_config
from noisy_targets.exceptions import NoisyTargetsError
from noisy_targets.signals import experiment_completed

STAGES = ("generate", "abduce", "train", "evaluate", "compare")


class Command(BaseCommand):
    """
    Generate, abduce, train, evaluate or compare.

    Errors leave the command with the exit code of their class: 2 for
    configuration, 3 for input data, 4 for violated constraints and 5 for
    diverged training.
    """

    help = "Learn from diverse noisy labelings through abduced multi-target training."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="experiment YAML; the packaged default when omitted")
        parser.add_argument(
            "--seed", type=int, action="append", dest="seeds",
            help="seed to run; repeat to run several (overrides the config's seed list)",
        )
        parser.add_argument("--out", help="output directory for stage files and reports")
        parser.add_argument("--stage", choices=STAGES, default="compare")
        parser.add_argument("--jobs", type=int, help="worker threads for the compare stage")
        parser.add_argument("--predictions", help="predictions file scored by the evaluate stage")

    def handle(self, *args, **options):
        try:
            config = load_config(options["config"])
            if options["seeds"]:
                config = config.with_seeds(options["seeds"])
            if options["out"]:
                config = config.with_output_dir(options["out"])
            else:
                config = config.with_default_output_dir(getattr(settings, "NOISY_TARGETS_OUTPUT_DIR", None))
            stage = options["stage"]
            if stage == "compare":
                jobs = options["jobs"] or getattr(settings, "NOISY_TARGETS_JOBS", 1)
                self._compare(config, jobs)
            else:
                getattr(self, f"_{stage}")(config, config.seeds[0], options)
        except NoisyTargetsError as error:
            raise CommandError(str(error), returncode=error.exit_code) from error

    def _generate(self, config, seed, options):
        task, test = pipeline.generate_stage(config, seed, config.output_dir)
        self.stdout.write(
            f"generated {task.dns.d} samples, {task.dns.total_instances} instances "
            f"and {test.size} held-out instances in {config.output_dir}"
        )

    def _abduce(self, config, seed, options):
        result = pipeline.abduce_stage(config, seed, config.output_dir)
        self.stdout.write(f"abduced {result.rearranged.p} targets for {result.rearranged.n} instances")

    def _train(self, config, seed, options):
        report = pipeline.train_stage(config, seed, config.output_dir)
        self.stdout.write(f"trained {len(report.loss_per_epoch)} epochs, final loss {report.loss_per_epoch[-1]!r}")

    def _evaluate(self, config, seed, options):
        metrics = pipeline.evaluate_stage(config, seed, config.output_dir, options["predictions"])
        self.stdout.write(json.dumps({"accuracy": metrics.accuracy, "f1": metrics.f1}, sort_keys=True))

    def _compare(self, config, jobs):
        report = pipeline.run_pipeline(config, jobs=jobs)
        experiment_completed.send(sender="compare", report=report)
        for method, summary in report.aggregates().items():
            if summary is None:
                self.stdout.write(f"{method}: no successful seeds")
            else:
                f1 = summary["f1"]
                self.stdout.write(f"{method}: f1 {f1['mean']:.4f} +/- {f1['std']:.4f} over {summary['seeds']} seeds")
        failure = report.first_failure()
        if failure is not None:
            raise CommandError(
                f"{len(report.failed_seeds())} seeds aborted, first in stage '{failure.stage}': {failure.message}",
                returncode=failure.exit_code,
            )
