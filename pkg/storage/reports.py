import json
import os
from typing import Optional

from models import CrossSessionGraph, EpochMetrics, EvalReport
from services.graph_builder import describe_graph
from utils.logging import get_logger

logger = get_logger(__name__)

EPOCH_LOG = "epochs.jsonl"


class ReportWriter:
    """Machine-readable outputs of training, evaluation and graph building."""

    def __init__(self, directory: str):
        self.directory = directory

    def _ensure_directory_exists(self):
        """Ensure the reports directory exists."""
        os.makedirs(self.directory, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def reset_epoch_log(self):
        self._ensure_directory_exists()
        open(self.path(EPOCH_LOG), "w", encoding="utf-8").close()

    def append_epoch(self, metrics: EpochMetrics):
        """One JSON line per epoch."""
        self._ensure_directory_exists()
        with open(self.path(EPOCH_LOG), "a", encoding="utf-8") as f:
            f.write(json.dumps(metrics.to_record()) + "\n")

    def read_epochs(self) -> list:
        with open(self.path(EPOCH_LOG), "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def write_eval(self, report: EvalReport, out: Optional[str] = None, extra: Optional[dict] = None) -> str:
        record = report.to_record()
        if extra:
            record.update(extra)
        target = out or self.path("eval.json")
        directory = os.path.dirname(target)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True)
            f.write("\n")
        return target

    def write_cases(self, report: EvalReport, name: str = "cases.tsv") -> str:
        """Per-case ranks: session index and rank, a miss marked by rank > cutoff."""
        self._ensure_directory_exists()
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as f:
            f.write("session\trank\n")
            for index, rank in enumerate(report.ranks or []):
                f.write(f"{index}\t{rank}\n")
        return target

    def write_relations(self, graph: CrossSessionGraph, name: str = "relations.json") -> str:
        """Named category pairs with counts, plus fallback edge totals."""
        self._ensure_directory_exists()
        target = self.path(name)
        summary = describe_graph(graph)
        record = {
            "named": summary["named_relations"],
            "fallback_edges": summary["fallback_edges"],
            "relations": summary["relations"],
        }
        with open(target, "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2)
            f.write("\n")
        return target
