import json
import os
import struct

import numpy as np

from models import CrossSessionGraph, RelationTable
from utils.errors import GraphFormatError
from utils.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"CSGR"
VERSION = 2
# magic, version, nodes, edges, relations, category pairs, flags
HEADER = struct.Struct("<4sIIQIII")
FLAG_SIDE_INFO = 1
EDGE_DTYPE = np.dtype([("src", "<u4"), ("dst", "<u4"), ("rel", "<u2"), ("weight", "<f4")])
PAIR_DTYPE = np.dtype([("ci", "<u4"), ("cj", "<u4"), ("count", "<u8"), ("rel", "<i4")])


class GraphStore:
    """Binary persistence of the cross-session graph."""

    def __init__(self, path: str):
        self.path = path

    def _ensure_directory_exists(self):
        """Ensure the graph directory exists."""
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def save(self, graph: CrossSessionGraph):
        self._ensure_directory_exists()
        relations = graph.relations
        if relations.num_relations > np.iinfo(np.uint16).max:
            raise GraphFormatError("too many relations for the graph format")

        edges = np.zeros(graph.num_edges, dtype=EDGE_DTYPE)
        edges["src"] = graph.src
        edges["dst"] = graph.dst
        edges["rel"] = graph.rel
        edges["weight"] = graph.weight

        pairs_sorted = sorted(relations.pair_counts.items())
        pairs = np.zeros(len(pairs_sorted), dtype=PAIR_DTYPE)
        for k, ((ci, cj), count) in enumerate(pairs_sorted):
            pairs[k] = (ci, cj, count, relations.named.get((ci, cj), -1))
        # named pairs always travel with the table, even without a recorded count
        missing = [p for p in relations.named if p not in relations.pair_counts]
        if missing:
            extra = np.zeros(len(missing), dtype=PAIR_DTYPE)
            for k, (ci, cj) in enumerate(sorted(missing)):
                extra[k] = (ci, cj, 0, relations.named[(ci, cj)])
            pairs = np.concatenate([pairs, extra])

        with open(self.path, "wb") as f:
            f.write(
                HEADER.pack(
                    MAGIC,
                    VERSION,
                    graph.num_nodes,
                    graph.num_edges,
                    relations.num_relations,
                    pairs.shape[0],
                    FLAG_SIDE_INFO if graph.side_info else 0,
                )
            )
            f.write(edges.tobytes())
            f.write(pairs.tobytes())
        logger.info(f"Saved graph to {self.path} ({graph.num_edges} edges)")

    def load(self) -> CrossSessionGraph:
        """Parse and validate the whole file before building the graph."""
        try:
            with open(self.path, "rb") as f:
                raw = f.read()
        except FileNotFoundError:
            raise GraphFormatError(f"Graph file not found: {self.path}")
        except OSError as e:
            raise GraphFormatError(f"Unreadable graph file {self.path}: {e}")

        if len(raw) < HEADER.size:
            raise GraphFormatError(f"{self.path}: truncated header")
        magic, version, nodes, num_edges, num_relations, num_pairs, flags = HEADER.unpack_from(
            raw, 0
        )
        if magic != MAGIC:
            raise GraphFormatError(f"{self.path}: not a graph file")
        if version != VERSION:
            raise GraphFormatError(f"{self.path}: unsupported graph version {version}")
        expected = HEADER.size + num_edges * EDGE_DTYPE.itemsize + num_pairs * PAIR_DTYPE.itemsize
        if len(raw) != expected:
            raise GraphFormatError(
                f"{self.path}: expected {expected} bytes, found {len(raw)}"
            )

        offset = HEADER.size
        edges = np.frombuffer(raw, dtype=EDGE_DTYPE, count=num_edges, offset=offset)
        offset += num_edges * EDGE_DTYPE.itemsize
        pairs = np.frombuffer(raw, dtype=PAIR_DTYPE, count=num_pairs, offset=offset)

        named = {(int(p["ci"]), int(p["cj"])): int(p["rel"]) for p in pairs if p["rel"] >= 0}
        pair_counts = {(int(p["ci"]), int(p["cj"])): int(p["count"]) for p in pairs if p["count"] > 0}
        relations = RelationTable(named=named, pair_counts=pair_counts)
        if relations.num_relations != num_relations:
            raise GraphFormatError(
                f"{self.path}: header lists {num_relations} relations, table has {relations.num_relations}"
            )
        if num_edges and (
            int(edges["src"].max()) >= nodes
            or int(edges["dst"].max()) >= nodes
            or int(edges["rel"].max()) >= num_relations
        ):
            raise GraphFormatError(f"{self.path}: edge record out of range")

        return CrossSessionGraph(
            num_nodes=nodes,
            src=edges["src"].astype(np.int64),
            dst=edges["dst"].astype(np.int64),
            rel=edges["rel"].astype(np.int64),
            weight=edges["weight"].astype(np.float64),
            relations=relations,
            side_info=bool(flags & FLAG_SIDE_INFO),
        )

    def export_json(self, graph: CrossSessionGraph, path: str):
        """Human-readable dump of relations and edges."""
        relations = graph.relations
        record = {
            "nodes": graph.num_nodes,
            "side_info": graph.side_info,
            "relations": [
                {"id": rel, "label": relations.label(rel)}
                for rel in range(relations.num_relations)
            ],
            "edges": [
                {"src": int(s), "dst": int(d), "rel": int(r), "weight": float(w)}
                for s, d, r, w in zip(graph.src, graph.dst, graph.rel, graph.weight)
            ],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2)
        logger.info(f"Exported graph JSON to {path}")
