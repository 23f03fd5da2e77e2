import json
import os
from typing import List, Optional

from models import Dataset, PreprocessConfig, Session, Vocab
from services.session_data import vocab_hash
from utils.errors import DatasetError
from utils.helpers import canonical_json
from utils.logging import get_logger

logger = get_logger(__name__)

TRAIN_FILE = "train.jsonl"
TEST_FILE = "test.jsonl"
VOCAB_FILE = "vocab.json"
STATS_FILE = "stats.json"
META_FILE = "meta.json"


class DatasetStore:
    """Reads and writes a preprocessed dataset directory."""

    def __init__(self, directory: str):
        self.directory = directory

    def _ensure_directory_exists(self):
        """Ensure the dataset directory exists."""
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def save(
        self,
        dataset: Dataset,
        stats: Optional[dict] = None,
        config: Optional[PreprocessConfig] = None,
    ):
        """Write sessions, vocab, stats and meta; reruns produce identical bytes.

        The meta file keeps the sample settings later stages must agree with.
        """
        config = config or PreprocessConfig()
        self._ensure_directory_exists()
        self._write_sessions(TRAIN_FILE, dataset.train)
        self._write_sessions(TEST_FILE, dataset.test)

        vocab = dataset.vocab
        vocab_record = {
            "items": [
                {"key": key, "id": i, "category": vocab.item_category[i]}
                for i, key in enumerate(vocab.item_keys)
            ],
            "categories": [{"key": key, "id": i} for i, key in enumerate(vocab.category_keys)],
        }
        self._write_json(VOCAB_FILE, vocab_record)
        self._write_json(STATS_FILE, stats or {})
        self._write_json(
            META_FILE,
            {
                "config_fingerprint": dataset.config_fingerprint,
                "vocab_hash": vocab_hash(vocab),
                "augment": config.augment,
                "t_max": config.t_max,
            },
        )
        logger.info(f"Saved dataset to {self.directory}")

    def load(self) -> Dataset:
        """Load a dataset directory written by ``save``."""
        vocab = self._row_to_vocab(self._read_json(VOCAB_FILE))
        meta = self._read_json(META_FILE)
        dataset = Dataset(
            train=self._read_sessions(TRAIN_FILE, vocab),
            test=self._read_sessions(TEST_FILE, vocab),
            vocab=vocab,
            config_fingerprint=meta.get("config_fingerprint", ""),
        )
        if meta.get("vocab_hash") and meta["vocab_hash"] != vocab_hash(vocab):
            raise DatasetError(f"{self._path(VOCAB_FILE)} does not match its recorded hash")
        if not dataset.train:
            raise DatasetError("empty dataset")
        return dataset

    def load_stats(self) -> dict:
        return self._read_json(STATS_FILE)

    def load_meta(self) -> dict:
        return self._read_json(META_FILE)

    def _write_sessions(self, name: str, sessions: List[Session]):
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as f:
            for s in sessions:
                f.write(canonical_json({"items": s.items, "target": s.target}) + "\n")

    def _write_json(self, name: str, value: dict):
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as f:
            json.dump(value, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")

    def _read_json(self, name: str) -> dict:
        path = self._path(name)
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            raise DatasetError(f"Dataset file not found: {path}")
        except json.JSONDecodeError as e:
            raise DatasetError(f"Dataset file {path} is not valid JSON: {e}")

    def _read_sessions(self, name: str, vocab: Vocab) -> List[Session]:
        path = self._path(name)
        sessions = []
        try:
            with open(path, "r", encoding="utf-8") as f:
                for line_no, line in enumerate(f, start=1):
                    if line.strip():
                        sessions.append(self._row_to_session(line, vocab, path, line_no))
        except FileNotFoundError:
            raise DatasetError(f"Dataset file not found: {path}")
        return sessions

    def _row_to_session(self, line: str, vocab: Vocab, path: str, line_no: int) -> Session:
        """Convert a JSONL record to a Session."""
        try:
            record = json.loads(line)
            items = [int(v) for v in record["items"]]
            target = int(record["target"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"{path}:{line_no}: malformed session record ({e})")
        ids = items + [target]
        if not items or min(ids) < 0 or max(ids) >= vocab.num_items:
            raise DatasetError(f"{path}:{line_no}: item id outside the vocabulary")
        return Session(items=items, target=target)

    def _row_to_vocab(self, record: dict) -> Vocab:
        """Convert the vocab record back to a Vocab."""
        try:
            items = sorted(record["items"], key=lambda r: r["id"])
            categories = sorted(record["categories"], key=lambda r: r["id"])
            vocab = Vocab(
                item_keys=[str(r["key"]) for r in items],
                category_keys=[str(r["key"]) for r in categories],
                item_category=[int(r["category"]) for r in items],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"Malformed vocab file: {e}")
        if [r["id"] for r in items] != list(range(len(items))):
            raise DatasetError("Malformed vocab file: item ids are not dense")
        return vocab
