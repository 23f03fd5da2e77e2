import argparse
import os

from commands.base import Command
from config.settings import RunConfig
from models import ColumnMapping
from services.session_data import dataset_stats, preprocess_log
from storage import DatasetStore
from utils.errors import DatasetError
from utils.helpers import format_details


class PreprocessCommand(Command):
    """Turn a raw click log into filtered, split, id-densified sessions."""

    name = "preprocess"
    help = "Sessionize, split and filter a click log"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--input", dest="input_path", default=None, help="Delimited click log")
        parser.add_argument("--min-item-freq", dest="min_item_freq", type=int, default=None)
        parser.add_argument("--t-max", dest="t_max", type=int, default=None)
        parser.add_argument(
            "--split-boundary", dest="split_boundary", type=int, default=None,
            help="Epoch seconds; sessions ending after it are test sessions",
        )
        parser.add_argument("--test-days", dest="test_days", type=float, default=None)
        parser.add_argument(
            "--no-augment", dest="augment", action="store_false", default=None,
            help="Use only the full prefix of each session as a sample",
        )
        parser.add_argument("--session-col", type=int, default=0)
        parser.add_argument("--time-col", type=int, default=1)
        parser.add_argument("--item-col", type=int, default=2)
        parser.add_argument("--category-col", type=int, default=3)
        parser.add_argument("--delimiter", default=",")
        parser.add_argument("--header", action="store_true", help="First line is a header")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        source = config.paths.input
        if not source:
            raise DatasetError("no input log given (use --input)")
        if not os.path.isfile(source):
            raise DatasetError(f"Input log not found: {source}")

        mapping = ColumnMapping(
            session=args.session_col,
            timestamp=args.time_col,
            item=args.item_col,
            category=args.category_col,
            delimiter=args.delimiter,
            has_header=args.header,
        )
        dataset = preprocess_log(source, config.preprocess, mapping)
        stats = dataset_stats(dataset, config.preprocess.augment)

        directory = args.out or config.paths.dataset_dir
        DatasetStore(directory).save(dataset, stats, config.preprocess)
        self.logger.log_artifact("dataset", directory, **stats)
        print(format_details(stats))
        return 0


def setup(cli):
    """Register the command."""
    cli.add_command(PreprocessCommand())
