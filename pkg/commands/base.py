import argparse
from typing import Optional, Tuple

from config.settings import FLAT_KEYS, RunConfig, apply_overrides, settings
from models import CrossSessionGraph, Dataset, ModelConfig
from services.graph_builder import graph_hash
from services.model import CaresModel
from services.parameters import ModelDims, ModelParams
from services.session_data import vocab_hash
from storage import CheckpointStore, DatasetStore, GraphStore
from utils.errors import ConfigError
from utils.logging import RunLogger

# preprocess settings a dataset records and every later stage inherits
DATASET_KEYS = ("t_max", "augment")

# flat keys restored from a checkpoint besides the model section
RESTORED_KEYS = ("score_scale", "use_side_info")


class Command:
    """One CLI subcommand; ``run`` returns the process exit code."""

    name: str = ""
    help: str = ""

    def __init__(self):
        self.logger = RunLogger(f"commands.{self.name}")

    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        raise NotImplementedError


def adopt_dataset_settings(config: RunConfig, meta: dict):
    """Copy the dataset's recorded sample settings into ``config``.

    A value set explicitly for this run must match the recorded one.
    """
    for key in DATASET_KEYS:
        if key not in meta:
            continue
        stored = meta[key]
        current = getattr(config.preprocess, key)
        if key in config.explicit and current != stored:
            raise ConfigError(
                f"{key}={current!r} conflicts with the dataset, preprocessed with {key}={stored!r}"
            )
        setattr(config.preprocess, key, stored)


def load_dataset(config: RunConfig) -> Dataset:
    store = DatasetStore(config.paths.dataset_dir)
    dataset = store.load()
    adopt_dataset_settings(config, store.load_meta())
    return dataset


def check_side_info(graph: CrossSessionGraph, use_side_info: bool, path: str):
    if graph.side_info != use_side_info:
        built = "with" if graph.side_info else "without"
        wanted = "with" if use_side_info else "without"
        hint = "" if use_side_info else " (build-graph --no-side-info)"
        raise ConfigError(
            f"{path} was built {built} side information but the model runs {wanted} it; "
            f"rebuild the graph{hint}"
        )


def load_graph(config: RunConfig) -> Optional[CrossSessionGraph]:
    """The cross-session graph, or None when graph aggregation is switched off."""
    if not config.model.use_graph:
        return None
    graph = GraphStore(config.paths.graph).load()
    check_side_info(graph, config.model.use_side_info, config.paths.graph)
    return graph


def model_config_from_record(record: dict) -> Tuple[ModelConfig, float]:
    """Model switches and score scale a checkpoint was trained with."""
    restored = RunConfig()
    keys = {
        k: v
        for k, v in record.items()
        if k in FLAT_KEYS and (FLAT_KEYS[k][0] == "model" or k in RESTORED_KEYS)
    }
    try:
        apply_overrides(restored, keys)
    except ConfigError as e:
        raise ConfigError(f"checkpoint config is not usable: {e}")
    return restored.model, restored.train.score_scale


def new_model(config: RunConfig, dataset: Dataset, graph: Optional[CrossSessionGraph]) -> CaresModel:
    """Freshly initialized model sized for ``dataset`` and ``graph``."""
    vocab = dataset.vocab
    num_relations = graph.relations.num_relations if graph is not None else 3
    params = ModelParams.for_model(
        config.model,
        num_items=vocab.num_items,
        num_categories=vocab.num_categories,
        num_relations=num_relations,
        t_max=config.preprocess.t_max,
        seed=config.train.seed,
    )
    return CaresModel(
        params,
        config.model,
        vocab.category_array(),
        graph=graph,
        score_scale=config.train.score_scale,
    )


def load_model(config: RunConfig, dataset: Dataset) -> CaresModel:
    """Model restored from the configured checkpoint, checked against dataset and graph."""
    store = CheckpointStore(config.paths.checkpoint)
    checkpoint = store.load(expected_vocab_hash=vocab_hash(dataset.vocab))
    model_config, score_scale = model_config_from_record(checkpoint.config)
    graph = None
    if model_config.use_graph:
        graph = GraphStore(config.paths.graph).load()
        check_side_info(graph, model_config.use_side_info, config.paths.graph)
    store.check_graph(checkpoint, graph_hash(graph) if graph is not None else "")
    dims = ModelDims.from_record(checkpoint.dims)
    params = ModelParams.from_arrays(dims, checkpoint.tensors)
    return CaresModel(
        params, model_config, dataset.vocab.category_array(), graph=graph, score_scale=score_scale
    )


def progress_enabled(config: RunConfig) -> bool:
    return settings.progress and not config.deterministic
