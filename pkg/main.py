import argparse
import importlib
import os
import sys

# Set timezone environment variable so timestamp parsing is UTC everywhere
os.environ["TZ"] = "UTC"

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _pin_threads(argv):
    """BLAS thread pools read these once, so they are set before numpy loads."""
    if "--deterministic" in argv:
        for var in THREAD_VARS:
            os.environ[var] = "1"
        return
    threads = os.getenv("CARES_THREADS")
    if "--threads" in argv:
        index = argv.index("--threads")
        if index + 1 < len(argv):
            threads = argv[index + 1]
    if threads and threads.isdigit():
        for var in THREAD_VARS:
            os.environ.setdefault(var, threads)


_pin_threads(sys.argv[1:])

from autodiff import set_debug, set_precision  # noqa: E402
from config.settings import FLAT_KEYS, build_run_config, settings  # noqa: E402
from utils.errors import CaresError, InputError, InvariantError  # noqa: E402
from utils.logging import RunLogger, setup_logging  # noqa: E402

EXTENSIONS = [
    "commands.preprocess",
    "commands.graph",
    "commands.train",
    "commands.evaluate",
    "commands.recommend",
]


def _global_arguments() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset after it
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of flat config keys")
    parent.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parent.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    parent.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS,
                        help="Single thread, reproducible outputs")
    parent.add_argument("--out", default=argparse.SUPPRESS, help="Primary output path")
    parent.add_argument("--debug", action="store_true", default=argparse.SUPPRESS,
                        help="Shape and finiteness checks on every op")
    parent.add_argument("--data-dir", dest="data_dir", default=argparse.SUPPRESS,
                        help="Default location of all artifacts")
    parent.add_argument("--dataset", dest="dataset_dir", default=argparse.SUPPRESS)
    parent.add_argument("--graph", dest="graph_path", default=argparse.SUPPRESS)
    parent.add_argument("--checkpoint", dest="checkpoint_path", default=argparse.SUPPRESS)
    parent.add_argument("--reports", dest="reports_dir", default=argparse.SUPPRESS)
    return parent


class CaresCLI:
    """Command registry and dispatcher."""

    def __init__(self):
        self.commands = {}
        self.logger = RunLogger(__name__)

    def add_command(self, command):
        self.commands[command.name] = command

    def load_extension(self, name: str):
        """Import a commands module and let it register itself."""
        importlib.import_module(name).setup(self)

    def build_parser(self) -> argparse.ArgumentParser:
        parent = _global_arguments()
        parser = argparse.ArgumentParser(
            prog="cares",
            description="Session-based next-item recommendation",
            parents=[parent],
        )
        subparsers = parser.add_subparsers(dest="command", required=True)
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.help, parents=[parent])
            command.add_arguments(sub)
        return parser

    def run(self, argv=None) -> int:
        for extension in EXTENSIONS:
            self.load_extension(extension)
        args = self.build_parser().parse_args(argv)
        command = self.commands[args.command]
        args.out = getattr(args, "out", None)

        try:
            overrides = {k: v for k, v in vars(args).items() if k in FLAT_KEYS}
            config = build_run_config(
                getattr(args, "config", None),
                overrides,
                data_dir=getattr(args, "data_dir", None),
            )
            setup_logging(settings.log_dir, "DEBUG" if config.debug else settings.log_level)
            set_precision(config.train.precision)
            set_debug(config.debug)
            return command.run(args, config)
        except InputError as e:
            self.logger.error(f"{command.name}: {e}")
            return e.exit_code
        except InvariantError as e:
            self.logger.error(f"{command.name}: internal invariant violated: {e}")
            return e.exit_code
        except CaresError as e:
            self.logger.error(f"{command.name}: {e}")
            return e.exit_code
        except KeyboardInterrupt:
            self.logger.warning("Interrupted by user")
            return 130
        except Exception as e:
            self.logger.error(f"{command.name}: unexpected failure", e)
            return InvariantError.exit_code


def main(argv=None) -> int:
    """Main function to run the CLI."""
    return CaresCLI().run(argv)


if __name__ == "__main__":
    sys.exit(main())
