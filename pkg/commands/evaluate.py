import argparse
import json

from commands.base import Command, load_dataset, load_model
from config.settings import RunConfig
from services.evaluator import evaluate, evaluate_popularity
from services.session_data import expand_samples
from storage import ReportWriter
from utils.errors import DatasetError


class EvaluateCommand(Command):
    """Rank every test target against the full catalog."""

    name = "evaluate"
    help = "Report P@K and MRR@K of a checkpoint on the test split"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--cutoff", type=int, default=None)
        parser.add_argument("--no-test-augment", dest="test_augment", action="store_false",
                            default=None, help="Score only the full prefix of each test session")
        parser.add_argument("--per-case", dest="per_case", action="store_true", default=None,
                            help="Also write each case's rank to a TSV file")
        parser.add_argument("--popularity", action="store_true", default=None,
                            help="Add the train-popularity baseline to the report")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        dataset = load_dataset(config)
        model = load_model(config, dataset)
        samples = expand_samples(dataset.test, config.eval.test_augment)
        if not samples:
            raise DatasetError("cannot evaluate an empty test set")

        cfg = config.eval
        report = evaluate(
            model,
            samples,
            cutoff=cfg.cutoff,
            batch_size=config.train.batch_size,
            threads=config.threads,
            keep_ranks=cfg.per_case,
        )
        extra = {}
        if cfg.popularity:
            baseline = evaluate_popularity(
                dataset.train, samples, dataset.vocab.num_items, cutoff=cfg.cutoff
            )
            extra["popularity"] = baseline.to_record()

        writer = ReportWriter(config.paths.reports_dir)
        if cfg.per_case:
            self.logger.log_artifact("per-case ranks", writer.write_cases(report))
        if args.out:
            self.logger.log_artifact("evaluation report", writer.write_eval(report, args.out, extra))
        else:
            record = report.to_record()
            record.update(extra)
            print(json.dumps(record, indent=2, sort_keys=True))
        return 0


def setup(cli):
    """Register the command."""
    cli.add_command(EvaluateCommand())
