import json
import os
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from models import Checkpoint
from utils.errors import CheckpointError
from utils.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"CARS"
VERSION = 1
# magic, version, d, m, l, L, relations, t_max, meta length
HEADER = struct.Struct("<4sIIIIIIII")
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODE_OF = {np.dtype("float32"): 0, np.dtype("float64"): 1}

DIM_KEYS = ("dim", "num_items", "num_categories", "layers", "num_relations", "t_max")


class _Reader:
    """Bounds-checked cursor over the file bytes."""

    def __init__(self, raw: bytes, path: str):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.raw[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


class CheckpointStore:
    """Versioned binary container of parameters, optimizer state and provenance."""

    def __init__(self, path: str):
        self.path = path

    def _ensure_directory_exists(self):
        """Ensure the checkpoint directory exists."""
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def save(self, checkpoint: Checkpoint):
        self._ensure_directory_exists()
        dims = checkpoint.dims
        meta = json.dumps(
            {
                "vocab_hash": checkpoint.vocab_hash,
                "graph_hash": checkpoint.graph_hash,
                "config": checkpoint.config,
                "epoch": checkpoint.epoch,
                "optimizer_step": checkpoint.optimizer_step,
                "dims": dims,
                "rng_state": checkpoint.rng_state,
            },
            sort_keys=True,
        ).encode("utf-8")

        records = {**checkpoint.tensors, **checkpoint.optimizer_state}
        tmp_path = f"{self.path}.tmp"
        with open(tmp_path, "wb") as f:
            f.write(
                HEADER.pack(
                    MAGIC,
                    VERSION,
                    *(int(dims.get(k, 0)) for k in DIM_KEYS),
                    len(meta),
                )
            )
            f.write(meta)
            f.write(struct.pack("<I", len(records)))
            for name, array in records.items():
                f.write(self._tensor_record(name, array))
        os.replace(tmp_path, self.path)
        logger.info(f"Saved checkpoint to {self.path} (epoch {checkpoint.epoch})")

    @staticmethod
    def _tensor_record(name: str, array: np.ndarray) -> bytes:
        array = np.asarray(array)
        if array.dtype not in CODE_OF:
            raise CheckpointError(f"tensor {name} has unsupported dtype {array.dtype}")
        code = CODE_OF[array.dtype]
        encoded = name.encode("utf-8")
        head = struct.pack("<H", len(encoded)) + encoded
        head += struct.pack("<BB", code, array.ndim)
        head += struct.pack(f"<{array.ndim}I", *array.shape)
        data = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()
        return head + data

    def load(
        self,
        expected_vocab_hash: Optional[str] = None,
        expected_graph_hash: Optional[str] = None,
    ) -> Checkpoint:
        """Parse the whole file, then check provenance hashes."""
        try:
            with open(self.path, "rb") as f:
                raw = f.read()
        except FileNotFoundError:
            raise CheckpointError(f"Checkpoint not found: {self.path}")
        except OSError as e:
            raise CheckpointError(f"Unreadable checkpoint {self.path}: {e}")

        reader = _Reader(raw, self.path)
        magic, version, *dim_values, meta_len = reader.unpack(HEADER.format)
        if magic != MAGIC:
            raise CheckpointError(f"{self.path}: not a checkpoint file")
        if version != VERSION:
            raise CheckpointError(f"{self.path}: unsupported checkpoint version {version}")
        try:
            meta = json.loads(reader.take(meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{self.path}: corrupt checkpoint metadata ({e})")

        (count,) = reader.unpack("<I")
        tensors: Dict[str, np.ndarray] = {}
        optimizer_state: Dict[str, np.ndarray] = {}
        for _ in range(count):
            name, array = self._read_record(reader)
            (optimizer_state if name.startswith("adam.") else tensors)[name] = array
        if reader.offset != len(raw):
            raise CheckpointError(f"{self.path}: trailing bytes after the last tensor")

        dims = dict(meta.get("dims", {}))
        for key, value in zip(DIM_KEYS, dim_values):
            if dims.get(key, value) != value:
                raise CheckpointError(f"{self.path}: header and metadata disagree on {key}")

        if expected_vocab_hash is not None and meta.get("vocab_hash") != expected_vocab_hash:
            raise CheckpointError("checkpoint/vocab mismatch: the model was trained on another vocabulary")
        checkpoint = Checkpoint(
            tensors=tensors,
            vocab_hash=meta.get("vocab_hash", ""),
            graph_hash=meta.get("graph_hash", ""),
            config=meta.get("config", {}),
            epoch=int(meta.get("epoch", 0)),
            optimizer_step=int(meta.get("optimizer_step", 0)),
            optimizer_state=optimizer_state,
            dims=dims,
            rng_state=meta.get("rng_state", {}),
        )
        if expected_graph_hash is not None:
            self.check_graph(checkpoint, expected_graph_hash)
        return checkpoint

    @staticmethod
    def check_graph(checkpoint: Checkpoint, expected_graph_hash: str):
        if checkpoint.graph_hash != expected_graph_hash:
            raise CheckpointError("checkpoint/graph mismatch: the model was trained on another graph")

    @staticmethod
    def _read_record(reader: _Reader) -> Tuple[str, np.ndarray]:
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{reader.path}: corrupt tensor name")
        code, ndim = reader.unpack("<BB")
        if code not in DTYPE_CODES:
            raise CheckpointError(f"{reader.path}: tensor {name} has unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = DTYPE_CODES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        data = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape)
        return name, data.astype(dtype.newbyteorder("="), copy=True)
