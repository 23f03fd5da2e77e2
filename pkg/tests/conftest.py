import os
import sys

import numpy as np
import pytest

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from autodiff import set_debug, set_precision  # noqa: E402
from models import (  # noqa: E402
    Dataset,
    GraphConfig,
    ModelConfig,
    Precision,
    Session,
    Vocab,
)
from services.graph_builder import build_graph  # noqa: E402
from services.model import CaresModel  # noqa: E402
from services.parameters import ModelParams  # noqa: E402


def make_pattern_corpus(num_sessions=500, num_patterns=5, pattern_length=10, seed=0):
    """Sessions cut from fixed item sequences; every item belongs to one pattern.

    Session n follows pattern n % num_patterns. Within a pattern the first 80%
    of its sessions are train, the rest test.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(num_patterns * pattern_length)
    patterns = [
        [int(v) for v in order[p * pattern_length:(p + 1) * pattern_length]]
        for p in range(num_patterns)
    ]
    item_category = np.zeros(num_patterns * pattern_length, dtype=np.int64)
    for p, pattern in enumerate(patterns):
        item_category[pattern] = p

    per_pattern = num_sessions // num_patterns
    train, test = [], []
    for n in range(num_sessions):
        pattern = patterns[n % num_patterns]
        length = int(rng.integers(3, pattern_length + 1))
        start = int(rng.integers(0, pattern_length - length + 1))
        seq = pattern[start:start + length]
        session = Session(items=seq[:-1], target=seq[-1])
        (train if n // num_patterns < int(per_pattern * 0.8) else test).append(session)
    return train, test, item_category, patterns


def make_vocab(item_category):
    num_categories = int(np.max(item_category)) + 1
    return Vocab(
        item_keys=[f"i{v}" for v in range(len(item_category))],
        category_keys=[f"c{c}" for c in range(num_categories)],
        item_category=[int(c) for c in item_category],
    )


def random_sessions(rng, num_sessions, num_items, max_length=6, min_length=2):
    sessions = []
    for _ in range(num_sessions):
        length = int(rng.integers(min_length, max_length + 1))
        seq = [int(v) for v in rng.integers(0, num_items, size=length)]
        sessions.append(Session(items=seq[:-1], target=seq[-1]))
    return sessions


@pytest.fixture(autouse=True)
def default_runtime():
    """Every test starts in float32 without debug traps."""
    set_precision(Precision.FLOAT32)
    set_debug(False)
    yield
    set_precision(Precision.FLOAT32)
    set_debug(False)


@pytest.fixture
def toy_corpus():
    return make_pattern_corpus()


@pytest.fixture
def toy_dataset(toy_corpus):
    train, test, item_category, _ = toy_corpus
    return Dataset(train=train, test=test, vocab=make_vocab(item_category))


@pytest.fixture
def micro_corpus():
    """30 items in 5 categories; 12 random sessions."""
    rng = np.random.default_rng(11)
    item_category = np.arange(30, dtype=np.int64) % 5
    sessions = random_sessions(rng, 12, 30, max_length=6, min_length=3)
    return sessions, item_category


@pytest.fixture
def micro_model(micro_corpus):
    """d=8, two layers, over the micro corpus graph; float32 unless a test switches."""
    sessions, item_category = micro_corpus
    graph = build_graph([s.sequence for s in sessions], item_category, 5, GraphConfig(top_q=2))
    config = ModelConfig(dim=8, layers=2)
    params = ModelParams.for_model(
        config, num_items=30, num_categories=5,
        num_relations=graph.relations.num_relations, t_max=10, seed=3,
    )
    return CaresModel(params, config, item_category, graph=graph)
