import argparse
import os

from commands.base import Command, load_dataset, load_graph, new_model, progress_enabled
from config.presets import list_presets
from config.settings import RunConfig
from config.variants import get_variants_list
from services.evaluator import evaluate
from services.graph_builder import graph_hash
from services.parameters import ModelDims, ModelParams
from services.session_data import expand_samples, vocab_hash
from services.trainer import Trainer
from storage import CheckpointStore, ReportWriter
from utils.errors import CheckpointError, DatasetError


class TrainCommand(Command):
    """Fit the recommender and write a checkpoint plus the epoch log."""

    name = "train"
    help = "Train the model on a preprocessed dataset and graph"

    def add_arguments(self, parser: argparse.ArgumentParser):
        presets = ", ".join(list_presets())
        variants = ", ".join(v.name for v in get_variants_list())
        parser.add_argument("--epochs", type=int, default=None)
        parser.add_argument("--lambda", dest="lambda", type=float, default=None,
                            help="Weight of the soft-label KL term")
        parser.add_argument("--dataset-preset", dest="dataset_preset", default=None,
                            help=f"Lambda preset ({presets})")
        parser.add_argument("--variant", default=None, help=f"Model variant ({variants})")
        parser.add_argument("--dim", type=int, default=None)
        parser.add_argument("--layers", type=int, default=None)
        parser.add_argument("--share-layers", dest="share_layers", action="store_true",
                            default=None)
        parser.add_argument("--normalize-each-layer", dest="normalize_each_layer",
                            action="store_true", default=None)
        parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        parser.add_argument("--lr", type=float, default=None)
        parser.add_argument("--lr-decay", dest="lr_decay", type=float, default=None)
        parser.add_argument("--lr-decay-every", dest="lr_decay_every", type=int, default=None)
        parser.add_argument("--l2", type=float, default=None)
        parser.add_argument("--score-scale", dest="score_scale", type=float, default=None)
        parser.add_argument("--hash-dim", dest="hash_dim", type=int, default=None)
        parser.add_argument("--pool-size", dest="pool_size", type=int, default=None)
        parser.add_argument("--retrieve-k", dest="retrieve_k", type=int, default=None)
        parser.add_argument("--precision", choices=["float32", "float64"], default=None)
        parser.add_argument("--eval-every", dest="eval_every", type=int, default=None,
                            help="Evaluate on the test split every N epochs (0 = never)")
        parser.add_argument("--resume", action="store_true",
                            help="Continue from the existing checkpoint")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        dataset = load_dataset(config)
        graph = load_graph(config)
        model = new_model(config, dataset, graph)
        trainer = Trainer.create(
            model, config.train, config.retrieval, progress=progress_enabled(config)
        )

        checkpoint_path = args.out or config.paths.checkpoint
        reports = ReportWriter(config.paths.reports_dir)
        vocab_digest = vocab_hash(dataset.vocab)
        graph_digest = graph_hash(graph) if graph is not None else ""

        if args.resume:
            if not os.path.isfile(checkpoint_path):
                raise CheckpointError(f"Checkpoint not found: {checkpoint_path}")
            checkpoint = CheckpointStore(checkpoint_path).load(vocab_digest, graph_digest)
            if ModelDims.from_record(checkpoint.dims) != model.params.dims:
                raise CheckpointError("checkpoint dimensions differ from the current config")
            restored = ModelParams.from_arrays(model.params.dims, checkpoint.tensors)
            for name, tensor in model.params.named().items():
                tensor.data[...] = restored[name].data
            trainer.restore(checkpoint)
            self.logger.log_stage("resume", epoch=trainer.epoch)
        else:
            reports.reset_epoch_log()

        samples = expand_samples(dataset.train, config.preprocess.augment)
        if not samples:
            raise DatasetError("empty dataset")
        test_samples = expand_samples(dataset.test, config.eval.test_augment)

        def evaluate_test():
            report = evaluate(
                model, test_samples, config.eval.cutoff, config.train.batch_size, config.threads
            )
            return report.p_at_k, report.mrr_at_k

        self.logger.log_stage(
            "train",
            samples=len(samples),
            parameters=model.params.count(),
            variant=config.variant,
            lambda_=config.train.lambda_,
        )
        epochs = max(config.train.epochs - trainer.epoch, 0)
        trainer.fit(
            samples,
            epochs=epochs,
            evaluate=evaluate_test if test_samples else None,
            on_epoch=reports.append_epoch,
        )

        store = CheckpointStore(checkpoint_path)
        store.save(trainer.checkpoint(vocab_digest, graph_digest, config.to_flat()))
        self.logger.log_artifact("checkpoint", checkpoint_path, epoch=trainer.epoch)
        return 0


def setup(cli):
    """Register the command."""
    cli.add_command(TrainCommand())
