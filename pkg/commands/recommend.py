import argparse
import sys

from commands.base import Command, load_dataset, load_model
from config.settings import RunConfig
from services.evaluator import recommend
from utils.errors import DatasetError


class RecommendCommand(Command):
    """Score the next item for one session read from stdin."""

    name = "recommend"
    help = "Top-k next items for a session of item keys on stdin"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--k", type=int, default=20, help="Number of items to return")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        keys = sys.stdin.read().split()
        if not keys:
            raise DatasetError("no session items on stdin")
        if args.k < 1:
            raise DatasetError("--k must be at least 1")

        dataset = load_dataset(config)
        vocab = dataset.vocab
        unknown = sorted({k for k in keys if k not in vocab.item_index})
        if unknown:
            raise DatasetError(f"unknown item key(s): {', '.join(unknown)}")

        model = load_model(config, dataset)
        items = [vocab.item_index[k] for k in keys]
        t_max = model.params.dims.t_max
        if len(items) > t_max:
            self.logger.warning(f"Session has {len(items)} items; keeping the last {t_max}")
            items = items[-t_max:]

        lines = [f"{vocab.item_keys[i]}\t{p:.6f}" for i, p in recommend(model, items, args.k)]
        output = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write(output)
        else:
            sys.stdout.write(output)
        return 0


def setup(cli):
    """Register the command."""
    cli.add_command(RecommendCommand())
