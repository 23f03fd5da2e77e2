from storage.checkpoints import CheckpointStore
from storage.datasets import DatasetStore
from storage.graphs import GraphStore
from storage.reports import ReportWriter

__all__ = ["CheckpointStore", "DatasetStore", "GraphStore", "ReportWriter"]
