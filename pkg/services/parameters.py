"""Trainable tables and matrices of the recommender."""

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from autodiff import Tensor
from models import ModelConfig
from utils.errors import CheckpointError


@dataclass
class ModelDims:
    """Sizes that fix every parameter shape."""

    num_items: int
    num_categories: int
    num_relations: int
    t_max: int
    dim: int
    layers: int
    share_layers: bool = False

    def to_record(self) -> Dict[str, int]:
        return {
            "num_items": self.num_items,
            "num_categories": self.num_categories,
            "num_relations": self.num_relations,
            "t_max": self.t_max,
            "dim": self.dim,
            "layers": self.layers,
            "share_layers": int(self.share_layers),
        }

    @classmethod
    def from_record(cls, record: Dict[str, int]) -> "ModelDims":
        try:
            return cls(
                num_items=int(record["num_items"]),
                num_categories=int(record["num_categories"]),
                num_relations=int(record["num_relations"]),
                t_max=int(record["t_max"]),
                dim=int(record["dim"]),
                layers=int(record["layers"]),
                share_layers=bool(record.get("share_layers", 0)),
            )
        except KeyError as e:
            raise CheckpointError(f"checkpoint is missing dimension {e}")


@dataclass
class LayerParams:
    """Graph attention, gating and virtual-node weights of one encoder layer."""

    w1_agg: Tensor
    w1_att: Tensor
    attn: Tensor
    w2: Tensor
    w3: Tensor
    w4: Tensor
    w5: Tensor


LAYER_FIELDS = ("w1_agg", "w1_att", "attn", "w2", "w3", "w4", "w5")


def parameter_shapes(dims: ModelDims) -> List[Tuple[str, Tuple[int, ...]]]:
    """Name and shape of every tensor, in initialization order."""
    d = dims.dim
    shapes = [
        ("item_embedding", (dims.num_items, d)),
        ("relation_embedding", (dims.num_relations, d)),
    ]
    stored_layers = min(dims.layers, 1) if dims.share_layers else dims.layers
    for k in range(stored_layers):
        shapes += [
            (f"layers.{k}.w1_agg", (d, d)),
            (f"layers.{k}.w1_att", (3 * d + 1, d)),
            (f"layers.{k}.attn", (d, 1)),
            (f"layers.{k}.w2", (d, d)),
            (f"layers.{k}.w3", (d, d)),
            (f"layers.{k}.w4", (d, d)),
            (f"layers.{k}.w5", (d, d)),
        ]
    shapes += [
        ("position_embedding", (dims.t_max, d)),
        ("length_embedding", (dims.t_max, d)),
        ("category_embedding", (dims.num_categories, d)),
        ("mlp.w1", (4 * d, d)),
        ("mlp.b1", (1, d)),
        ("mlp.w2", (d, 1)),
        ("mlp.b2", (1, 1)),
        ("w6", (2 * d, d)),
    ]
    return shapes


class ModelParams:
    """Named parameter tensors with typed accessors."""

    def __init__(self, dims: ModelDims, tensors: Dict[str, Tensor]):
        self.dims = dims
        self.tensors = tensors

    @classmethod
    def initialize(cls, dims: ModelDims, seed: int) -> "ModelParams":
        """Uniform(-1/sqrt(d), 1/sqrt(d)) for every tensor, from one seeded stream."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(dims.dim)
        tensors = {
            name: Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
            for name, shape in parameter_shapes(dims)
        }
        return cls(dims, tensors)

    @classmethod
    def from_arrays(cls, dims: ModelDims, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        tensors = {}
        for name, shape in parameter_shapes(dims):
            if name not in arrays:
                raise CheckpointError(f"checkpoint is missing tensor {name}")
            if tuple(arrays[name].shape) != shape:
                raise CheckpointError(
                    f"tensor {name} has shape {arrays[name].shape}, expected {shape}"
                )
            tensors[name] = Tensor(arrays[name], requires_grad=True, name=name)
        return cls(dims, tensors)

    @classmethod
    def for_model(cls, config: ModelConfig, num_items: int, num_categories: int,
                  num_relations: int, t_max: int, seed: int) -> "ModelParams":
        dims = ModelDims(
            num_items=num_items,
            num_categories=num_categories,
            num_relations=num_relations,
            t_max=t_max,
            dim=config.dim,
            layers=config.layers,
            share_layers=config.share_layers,
        )
        return cls.initialize(dims, seed)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> Dict[str, Tensor]:
        return self.tensors

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def layer(self, k: int) -> LayerParams:
        stored = 0 if self.dims.share_layers else k
        return LayerParams(*(self.tensors[f"layers.{stored}.{f}"] for f in LAYER_FIELDS))

    @property
    def item_embedding(self) -> Tensor:
        return self.tensors["item_embedding"]

    @property
    def relation_embedding(self) -> Tensor:
        return self.tensors["relation_embedding"]

    @property
    def position_embedding(self) -> Tensor:
        return self.tensors["position_embedding"]

    @property
    def length_embedding(self) -> Tensor:
        return self.tensors["length_embedding"]

    @property
    def category_embedding(self) -> Tensor:
        return self.tensors["category_embedding"]

    def mlp(self) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
        t = self.tensors
        return t["mlp.w1"], t["mlp.b1"], t["mlp.w2"], t["mlp.b2"]

    @property
    def w6(self) -> Tensor:
        return self.tensors["w6"]

    def count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))
