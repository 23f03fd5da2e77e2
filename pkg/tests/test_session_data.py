import pytest

from models import ClickSession, ColumnMapping, PreprocessConfig, RawEvent, Session, Vocab
from services.session_data import (
    augment,
    build_sessions,
    dataset_stats,
    default_boundary,
    expand_samples,
    filter_dataset,
    ingest_events,
    preprocess_log,
    split_by_time,
    vocab_hash,
)
from utils.errors import DatasetError


def _events(rows):
    return [RawEvent(s, t, i, c) for s, t, i, c in rows]


def _click(key, items, end):
    return ClickSession(key=key, items=items, start_ts=end, end_ts=end)


def _vocab(n, categories=None):
    categories = categories or [0] * n
    return Vocab(
        item_keys=[f"i{k}" for k in range(n)],
        category_keys=[f"c{k}" for k in range(max(categories) + 1)],
        item_category=categories,
    )


def test_ingest_parses_in_file_order():
    events, malformed = ingest_events(b"s1,10,i1,c1\ns1,20,i2,c1")
    assert [(e.session_key, e.timestamp, e.item_key) for e in events] == [
        ("s1", 10, "i1"),
        ("s1", 20, "i2"),
    ]
    assert malformed == 0


def test_ingest_skips_missing_timestamp():
    events, malformed = ingest_events(b"s1,,i1,c1\n")
    assert events == []
    assert malformed == 1


def test_ingest_skips_empty_category():
    events, malformed = ingest_events(b"s1,10,i1,\ns1,20,i2,c1\n")
    assert [e.item_key for e in events] == ["i2"]
    assert malformed == 1


def test_ingest_empty_stream():
    assert ingest_events(b"") == ([], 0)


def test_ingest_column_mapping_and_header():
    data = b"item\tcat\tsession\tts\ni9\tc2\ts7\t5\n"
    mapping = ColumnMapping(session=2, timestamp=3, item=0, category=1, delimiter="\t", has_header=True)
    events, _ = ingest_events(data, mapping)
    assert events == [RawEvent("s7", 5, "i9", "c2")]


def test_ingest_missing_column_is_fatal():
    with pytest.raises(DatasetError, match="Missing mandatory column"):
        ingest_events(b"s1,10,i1\n")


def test_ingest_missing_file():
    with pytest.raises(DatasetError, match="not found"):
        ingest_events("/nonexistent/clicks.csv")


def test_build_sessions_sorts_by_time():
    sessions, vocab = build_sessions(_events([("s1", 20, "i2", "c"), ("s1", 10, "i1", "c")]))
    assert len(sessions) == 1
    assert [vocab.item_keys[v] for v in sessions[0].items] == ["i1", "i2"]


def test_build_sessions_groups_interleaved_keys():
    events = _events([
        ("a", 1, "x", "c"),
        ("b", 2, "y", "c"),
        ("a", 3, "z", "c"),
        ("b", 4, "x", "c"),
    ])
    sessions, vocab = build_sessions(events)
    assert [s.key for s in sessions] == ["a", "b"]
    assert [[vocab.item_keys[v] for v in s.items] for s in sessions] == [["x", "z"], ["y", "x"]]


def test_build_sessions_equal_timestamps_keep_input_order():
    sessions, vocab = build_sessions(_events([("s", 5, "b", "c"), ("s", 5, "a", "c")]))
    assert [vocab.item_keys[v] for v in sessions[0].items] == ["b", "a"]


def test_first_category_wins():
    _, vocab = build_sessions(_events([("s", 1, "x", "c1"), ("s", 2, "x", "c2")]))
    assert vocab.category_keys[vocab.item_category[0]] == "c1"


def test_split_strictly_after_boundary():
    sessions = [_click("a", [0], 10), _click("b", [0], 20), _click("c", [0], 30)]
    train, test = split_by_time(sessions, 20)
    assert [s.key for s in train] == ["a", "b"]
    assert [s.key for s in test] == ["c"]


def test_split_boundary_edges():
    sessions = [_click("a", [0], 10), _click("b", [0], 30)]
    assert split_by_time(sessions, 30)[1] == []
    assert split_by_time(sessions, 5)[0] == []


def test_default_boundary_is_last_week():
    sessions = [_click("a", [0], 100), _click("b", [0], 8 * 86400)]
    assert default_boundary(sessions, 7) == 86400


def test_filter_removes_rare_items_everywhere():
    # item 9 appears 4 times in train
    train = [_click(f"t{k}", [0, 1, 9], k) for k in range(4)] + [_click("t4", [0, 1], 4)]
    test = [_click("x", [9, 0, 1], 10)]
    dataset = filter_dataset(train, test, PreprocessConfig(min_item_freq=5), _vocab(10))
    assert "i9" not in dataset.vocab.item_keys
    assert all(len(s.sequence) == 2 for s in dataset.train)
    assert [dataset.vocab.item_keys[v] for v in dataset.test[0].sequence] == ["i0", "i1"]


def test_filter_drops_sessions_that_become_too_short():
    train = [_click(f"t{k}", [0, 1], k) for k in range(5)]
    test = [_click("x", [7, 1], 10)]
    dataset = filter_dataset(train, test, PreprocessConfig(min_item_freq=5), _vocab(10))
    assert dataset.test == []


def test_filter_truncates_to_suffix():
    long_session = list(range(25))
    train = [_click(f"t{k}", long_session, k) for k in range(2)]
    dataset = filter_dataset(train, [], PreprocessConfig(min_item_freq=1, t_max=20), _vocab(25))
    kept = [dataset.vocab.item_keys[v] for v in dataset.train[0].sequence]
    assert kept == [f"i{k}" for k in range(5, 25)]


def test_filter_reaches_fixed_point():
    # removing item 2 shortens session [2, 3] below length 2, which drops item 3 below min freq
    train = [_click("a", [0, 1], 1), _click("b", [0, 1], 2), _click("c", [2, 3], 3),
             _click("d", [3, 0], 4), _click("e", [1, 0], 5)]
    dataset = filter_dataset(train, [], PreprocessConfig(min_item_freq=2), _vocab(4))
    counts = {}
    for s in dataset.train:
        for v in s.sequence:
            counts[v] = counts.get(v, 0) + 1
    assert all(c >= 2 for c in counts.values())
    assert all(len(s.sequence) >= 2 for s in dataset.train)
    assert sorted(dataset.vocab.item_keys) == ["i0", "i1"]


def test_filter_empty_dataset_is_fatal():
    with pytest.raises(DatasetError, match="empty dataset"):
        filter_dataset([_click("a", [0, 1], 1)], [], PreprocessConfig(min_item_freq=5), _vocab(2))


def test_ids_follow_first_appearance_in_train():
    train = [_click("a", [3, 1], 1), _click("b", [1, 3], 2)]
    dataset = filter_dataset(train, [], PreprocessConfig(min_item_freq=1), _vocab(4))
    assert dataset.vocab.item_keys == ["i3", "i1"]


def test_augment_prefixes_longest_first():
    samples = augment(Session(items=[1, 2, 3], target=4))
    assert [(s.items, s.target) for s in samples] == [([1, 2, 3], 4), ([1, 2], 3), ([1], 2)]


def test_augment_smallest_and_degenerate():
    assert [(s.items, s.target) for s in augment(Session(items=[1], target=2))] == [([1], 2)]
    assert augment(Session(items=[1])) == []


def test_expand_samples_without_augmentation():
    sessions = [Session(items=[1, 2], target=3)]
    assert [(s.items, s.target) for s in expand_samples(sessions, False)] == [([1, 2], 3)]
    assert len(expand_samples(sessions, True)) == 2


def test_preprocess_log_end_to_end(tmp_path):
    lines = []
    for k in range(6):
        lines += [f"s{k},{100 + k * 10},a,c1", f"s{k},{101 + k * 10},b,c2"]
    lines += ["late,1000000,a,c1", "late,1000001,b,c2"]
    path = tmp_path / "clicks.csv"
    path.write_text("\n".join(lines) + "\n")

    config = PreprocessConfig(min_item_freq=2, split_boundary=500)
    dataset = preprocess_log(str(path), config)
    assert len(dataset.train) == 6
    assert len(dataset.test) == 1
    assert dataset.vocab.item_keys == ["a", "b"]
    assert dataset.vocab.category_keys == ["c1", "c2"]

    stats = dataset_stats(dataset)
    assert stats["train_sessions"] == 6
    assert stats["clicks"] == 14
    assert stats["average_length"] == pytest.approx(2.0)
    assert stats["train_samples"] == 6


def test_preprocess_is_deterministic(tmp_path):
    path = tmp_path / "clicks.csv"
    path.write_text("".join(f"s{k // 10},{k},i{k % 4},c{k % 2}\n" for k in range(40)))
    config = PreprocessConfig(min_item_freq=1, split_boundary=30)
    first = preprocess_log(str(path), config)
    second = preprocess_log(str(path), config)
    assert vocab_hash(first.vocab) == vocab_hash(second.vocab)
    assert first.config_fingerprint == second.config_fingerprint
    assert [s.sequence for s in first.train] == [s.sequence for s in second.train]
