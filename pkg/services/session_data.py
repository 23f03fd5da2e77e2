"""Click-log ingest, sessionization, temporal split, filtering and augmentation."""

import dataclasses
import io
import os
from collections import Counter
from typing import BinaryIO, Dict, List, Optional, Tuple, Union

import pandas as pd

from models import (
    ClickSession,
    ColumnMapping,
    Dataset,
    PreprocessConfig,
    RawEvent,
    Session,
    Vocab,
)
from utils.errors import DatasetError
from utils.helpers import stable_hash
from utils.logging import get_logger

logger = get_logger(__name__)

SECONDS_PER_DAY = 86400

Source = Union[str, bytes, BinaryIO]


def _open_source(source: Source):
    if isinstance(source, bytes):
        return io.BytesIO(source)
    if isinstance(source, str):
        if not os.path.isfile(source):
            raise DatasetError(f"Input log not found: {source}")
        return source
    return source


def _parse_timestamps(column: pd.Series) -> pd.Series:
    """Integer epoch seconds; ISO dates are accepted too. Unparseable -> NaN."""
    numeric = pd.to_numeric(column, errors="coerce").astype("float64")
    missing = numeric.isna() & (column != "")
    if missing.any():
        dates = pd.to_datetime(column[missing], errors="coerce", utc=True, format="ISO8601")
        seconds = (dates - pd.Timestamp(0, tz="UTC")) // pd.Timedelta(seconds=1)
        numeric.loc[missing] = seconds
    return numeric


def ingest_events(source: Source, mapping: Optional[ColumnMapping] = None) -> Tuple[List[RawEvent], int]:
    """Parse a delimited click log in file order.

    Returns the events and the number of malformed lines that were skipped.
    """
    mapping = mapping or ColumnMapping()
    bad_lines = []

    def on_bad_line(fields):
        bad_lines.append(fields)
        return None

    try:
        frame = pd.read_csv(
            _open_source(source),
            sep=mapping.delimiter,
            header=0 if mapping.has_header else None,
            dtype=str,
            keep_default_na=False,
            engine="python",
            on_bad_lines=on_bad_line,
        )
    except pd.errors.EmptyDataError:
        return [], 0
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DatasetError(f"Unreadable input log: {e}")

    columns = (mapping.session, mapping.timestamp, mapping.item, mapping.category)
    if max(columns) >= frame.shape[1]:
        raise DatasetError(
            f"Missing mandatory column: log has {frame.shape[1]} columns, mapping needs {max(columns) + 1}"
        )

    sessions = frame.iloc[:, mapping.session].fillna("").str.strip()
    items = frame.iloc[:, mapping.item].fillna("").str.strip()
    categories = frame.iloc[:, mapping.category].fillna("").str.strip()
    raw_ts = frame.iloc[:, mapping.timestamp].fillna("").str.strip()
    timestamps = _parse_timestamps(raw_ts)

    valid = (
        (sessions != "")
        & (items != "")
        & (categories != "")
        & timestamps.notna()
        & (timestamps >= 0)
    )
    malformed = len(bad_lines) + int((~valid).sum())
    if malformed:
        logger.warning(f"Skipped {malformed} malformed line(s) in input log")

    events = [
        RawEvent(session_key=s, timestamp=int(t), item_key=i, category_key=c)
        for s, t, i, c in zip(
            sessions[valid], timestamps[valid], items[valid], categories[valid]
        )
    ]
    logger.debug(f"Ingested {len(events)} events")
    return events, malformed


def build_sessions(events: List[RawEvent]) -> Tuple[List[ClickSession], Vocab]:
    """Group events per session key, time-ordered with input order breaking ties.

    Sessions come back ordered by start time. Item and category ids follow
    first appearance in that order; an item seen with several categories keeps
    the first one observed.
    """
    groups: Dict[str, List[int]] = {}
    for idx, event in enumerate(events):
        groups.setdefault(event.session_key, []).append(idx)

    item_category: Dict[str, str] = {}
    conflicts = set()
    for event in events:
        known = item_category.setdefault(event.item_key, event.category_key)
        if known != event.category_key:
            conflicts.add(event.item_key)
    if conflicts:
        logger.warning(
            f"{len(conflicts)} item(s) observed with several categories; first category kept"
        )

    ordered = []
    for key, idxs in groups.items():
        # sorted() is stable, so equal timestamps keep input order
        idxs = sorted(idxs, key=lambda i: events[i].timestamp)
        ordered.append((key, idxs))
    ordered.sort(key=lambda kv: events[kv[1][0]].timestamp)

    item_keys: List[str] = []
    item_ids: Dict[str, int] = {}
    category_keys: List[str] = []
    category_ids: Dict[str, int] = {}
    item_cat: List[int] = []
    sessions: List[ClickSession] = []
    for key, idxs in ordered:
        seq = []
        for i in idxs:
            item_key = events[i].item_key
            if item_key not in item_ids:
                cat_key = item_category[item_key]
                if cat_key not in category_ids:
                    category_ids[cat_key] = len(category_keys)
                    category_keys.append(cat_key)
                item_ids[item_key] = len(item_keys)
                item_keys.append(item_key)
                item_cat.append(category_ids[cat_key])
            seq.append(item_ids[item_key])
        sessions.append(
            ClickSession(
                key=key,
                items=seq,
                start_ts=events[idxs[0]].timestamp,
                end_ts=events[idxs[-1]].timestamp,
            )
        )

    vocab = Vocab(item_keys=item_keys, category_keys=category_keys, item_category=item_cat)
    logger.debug(f"Built {len(sessions)} sessions over {vocab.num_items} items")
    return sessions, vocab


def default_boundary(sessions: List[ClickSession], test_days: float) -> int:
    """Last observed timestamp minus ``test_days`` days."""
    if not sessions:
        return 0
    return int(max(s.end_ts for s in sessions) - test_days * SECONDS_PER_DAY)


def split_by_time(
    sessions: List[ClickSession], boundary: int
) -> Tuple[List[ClickSession], List[ClickSession]]:
    """Test iff the session's last event is strictly after ``boundary``."""
    train = [s for s in sessions if s.end_ts <= boundary]
    test = [s for s in sessions if s.end_ts > boundary]
    if sessions:
        lo = min(s.end_ts for s in sessions)
        hi = max(s.end_ts for s in sessions)
        if boundary < lo or boundary >= hi:
            logger.warning(
                f"Split boundary {boundary} outside observed range [{lo}, {hi}): "
                f"train={len(train)} test={len(test)}"
            )
    return train, test


def _filter_pass(
    train: List[List[int]], test: List[List[int]], config: PreprocessConfig
) -> Tuple[List[List[int]], List[List[int]], bool]:
    counts = Counter(item for seq in train for item in seq)
    keep = {item for item, c in counts.items() if c >= config.min_item_freq}
    changed = False

    def clean(seqs):
        nonlocal changed
        out = []
        for seq in seqs:
            kept = [v for v in seq if v in keep][-config.t_max:]
            if len(kept) != len(seq):
                changed = True
            if len(kept) >= 2:
                out.append(kept)
            else:
                changed = True
        return out

    return clean(train), clean(test), changed


def filter_dataset(
    train: List[ClickSession],
    test: List[ClickSession],
    config: PreprocessConfig,
    vocab: Vocab,
    boundary: Optional[int] = None,
) -> Dataset:
    """Filter rare and test-only items to a fixed point, truncate, re-index.

    Each pass removes items with train frequency below ``min_item_freq`` (items
    absent from train have frequency 0), keeps the last ``t_max`` items and
    drops sessions shorter than 2; passes repeat until nothing changes.
    """
    train_seqs = [list(s.items) for s in train]
    test_seqs = [list(s.items) for s in test]
    passes = 0
    changed = True
    while changed:
        train_seqs, test_seqs, changed = _filter_pass(train_seqs, test_seqs, config)
        passes += 1

    if not train_seqs:
        raise DatasetError("empty dataset")
    if not test_seqs:
        logger.warning("No test sessions survived filtering")

    # re-densify ids by first appearance in the (time-ordered) train sessions
    remap: Dict[int, int] = {}
    cat_remap: Dict[int, int] = {}
    item_keys: List[str] = []
    category_keys: List[str] = []
    item_cat: List[int] = []
    for seq in train_seqs:
        for old in seq:
            if old in remap:
                continue
            old_cat = vocab.item_category[old]
            if old_cat not in cat_remap:
                cat_remap[old_cat] = len(category_keys)
                category_keys.append(vocab.category_keys[old_cat])
            remap[old] = len(item_keys)
            item_keys.append(vocab.item_keys[old])
            item_cat.append(cat_remap[old_cat])

    def to_session(seq: List[int]) -> Session:
        ids = [remap[v] for v in seq]
        return Session(items=ids[:-1], target=ids[-1])

    new_vocab = Vocab(item_keys=item_keys, category_keys=category_keys, item_category=item_cat)
    fingerprint_source = dataclasses.asdict(config)
    fingerprint_source["split_boundary"] = boundary if boundary is not None else config.split_boundary
    dataset = Dataset(
        train=[to_session(s) for s in train_seqs],
        test=[to_session(s) for s in test_seqs],
        vocab=new_vocab,
        config_fingerprint=stable_hash(fingerprint_source),
    )
    logger.info(
        f"Filtered dataset in {passes} pass(es): train={len(dataset.train)} "
        f"test={len(dataset.test)} items={new_vocab.num_items} categories={new_vocab.num_categories}"
    )
    return dataset


def augment(session: Session) -> List[Session]:
    """Every (prefix, next item) pair of a session, longest prefix first."""
    seq = session.sequence
    return [Session(items=seq[:k], target=seq[k]) for k in range(len(seq) - 1, 0, -1)]


def expand_samples(sessions: List[Session], augment_samples: bool = True) -> List[Session]:
    """Training/evaluation samples: all prefixes, or only the full prefix."""
    if not augment_samples:
        return [Session(items=list(s.items), target=s.target) for s in sessions if s.items]
    samples: List[Session] = []
    for s in sessions:
        samples.extend(augment(s))
    return samples


def dataset_stats(dataset: Dataset, augment_samples: bool = True) -> dict:
    """Counts mirroring a dataset-statistics table."""
    lengths = [len(s.sequence) for s in dataset.train + dataset.test]
    return {
        "train_sessions": len(dataset.train),
        "test_sessions": len(dataset.test),
        "items": dataset.vocab.num_items,
        "categories": dataset.vocab.num_categories,
        "clicks": int(sum(lengths)),
        "average_length": float(sum(lengths) / len(lengths)) if lengths else 0.0,
        "train_samples": len(expand_samples(dataset.train, augment_samples)),
        "test_samples": len(expand_samples(dataset.test, augment_samples)),
    }


def preprocess_log(
    source: Source,
    config: PreprocessConfig,
    mapping: Optional[ColumnMapping] = None,
) -> Dataset:
    """Ingest, sessionize, split and filter a click log."""
    events, malformed = ingest_events(source, mapping)
    if not events:
        raise DatasetError("empty dataset")
    sessions, vocab = build_sessions(events)
    boundary = (
        config.split_boundary
        if config.split_boundary is not None
        else default_boundary(sessions, config.test_days)
    )
    train, test = split_by_time(sessions, boundary)
    logger.info(
        f"Split {len(sessions)} sessions at {boundary}: train={len(train)} test={len(test)}"
        + (f" (skipped {malformed} malformed line(s))" if malformed else "")
    )
    return filter_dataset(train, test, config, vocab, boundary=boundary)


def vocab_hash(vocab: Vocab) -> str:
    """Digest of the id assignment a model is trained against."""
    return stable_hash(
        {
            "items": vocab.item_keys,
            "categories": vocab.category_keys,
            "item_category": vocab.item_category,
        }
    )
