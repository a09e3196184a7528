import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bprlab.data import (
    YEAR_SECONDS,
    InteractionLog,
    LogFormat,
    dataset_stats,
    filter_min_interactions,
    ingest,
    read_split,
    split_temporal,
    split_user_based,
    subsample_users,
    synthetic_log,
    write_split,
)
from bprlab.errors import ConfigError, EmptyDataset, ParseError, SplitError


def _write(path, text):
    path.write_text(text)
    return path


def test_ingest_tab_separated(tmp_path):
    p = _write(tmp_path / "u.data", "10\t7\t5\t100\n3\t7\t4\t50\n10\t2\t1\t60\n")
    log = ingest(p)
    assert (log.user_count, log.item_count, len(log)) == (2, 2, 3)
    # ids are mapped in sorted string order
    assert list(log.user_ids) == ["10", "3"]
    assert list(log.item_ids) == ["2", "7"]
    got = sorted(zip(log.user_ids[log.users], log.item_ids[log.items], log.timestamps))
    assert got == [("10", "2", 60), ("10", "7", 100), ("3", "7", 50)]


def test_ingest_mapping_ignores_row_order(tmp_path):
    rows = ["a\tx\t1\t1", "b\ty\t1\t2", "c\tx\t1\t3", "a\tz\t1\t4"]
    a = ingest(_write(tmp_path / "a.tsv", "\n".join(rows) + "\n"))
    b = ingest(_write(tmp_path / "b.tsv", "\n".join(reversed(rows)) + "\n"))
    assert list(a.user_ids) == list(b.user_ids)
    assert a.event_set() == b.event_set()


def test_ingest_csv_header_and_skipped_column(tmp_path):
    p = _write(tmp_path / "r.csv", "userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n1,1029,3.0,1260759179\n")
    log = ingest(p, LogFormat(delimiter=",", header=True))
    assert len(log) == 2
    p2 = _write(tmp_path / "r2.csv", "1,x,31\n2,y,31\n")
    log2 = ingest(p2, LogFormat(delimiter=",", columns=("user", "-", "item")))
    assert (log2.user_count, log2.item_count) == (2, 1)
    assert np.all(log2.timestamps == 0)


def test_ingest_gzip(tmp_path):
    p = tmp_path / "log.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("1\t1\t1\t5\n2\t1\t1\t6\n")
    assert len(ingest(p)) == 2


def test_ingest_duplicates_keep_earliest(tmp_path):
    p = _write(tmp_path / "d.tsv", "1\t1\t5\t300\n1\t1\t3\t100\n1\t1\t4\t200\n")
    log = ingest(p)
    assert len(log) == 1 and log.timestamps[0] == 100


def test_ingest_bad_line_reports_line_number(tmp_path):
    p = _write(tmp_path / "bad.tsv", "1\t1\t5\t300\n1\t2\t5\n")
    with pytest.raises(ParseError) as exc:
        ingest(p)
    assert exc.value.line == 2
    p = _write(tmp_path / "bad2.tsv", "1\t1\t5\t300\n1\t2\tfive\t3\n\n2\t2\t1\toops\n")
    with pytest.raises(ParseError) as exc:
        ingest(p)
    assert exc.value.line == 2


def test_ingest_empty_inputs(tmp_path):
    with pytest.raises(EmptyDataset):
        ingest(_write(tmp_path / "e.tsv", ""))
    with pytest.raises(EmptyDataset):
        ingest(_write(tmp_path / "h.csv", "user,item\n"), LogFormat(",", ("user", "item"), header=True))


def test_log_format_validation():
    with pytest.raises(ConfigError):
        LogFormat(columns=("user", "rating"))
    with pytest.raises(ConfigError):
        LogFormat(columns=("user", "item", "weight"))


def _filter_oracle(pairs, min_user, min_item):
    pairs = set(pairs)
    while True:
        uc, ic = {}, {}
        for u, i in pairs:
            uc[u] = uc.get(u, 0) + 1
            ic[i] = ic.get(i, 0) + 1
        keep = {(u, i) for u, i in pairs if uc[u] >= min_user and ic[i] >= min_item}
        if keep == pairs:
            return keep
        pairs = keep


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 14), st.integers(0, 11)), min_size=1, max_size=120),
    st.integers(1, 4),
    st.integers(1, 4),
)
def test_filter_matches_fixed_point_oracle(pairs, min_user, min_item):
    log = InteractionLog.from_events(pairs, 15, 12)
    expected = _filter_oracle(pairs, min_user, min_item)
    if not expected:
        with pytest.raises(EmptyDataset):
            filter_min_interactions(log, min_user, min_item)
        return
    out = filter_min_interactions(log, min_user, min_item)
    got = {(int(out.user_ids[u]), int(out.item_ids[i])) for u, i in zip(out.users, out.items)}
    assert got == expected
    # the result is dense and already a fixed point
    assert out.user_counts().min() >= min_user and out.item_counts().min() >= min_item
    again = filter_min_interactions(out, min_user, min_item)
    assert len(again) == len(out)


def test_filter_rejects_zero_minimum(tiny_log):
    with pytest.raises(ConfigError):
        filter_min_interactions(tiny_log, 0, 1)


def test_user_based_split_structure(small_log):
    b = split_user_based(small_log, 20, 0.8, seed=11)
    val_users, test_users = set(b.validation.users.tolist()), set(b.test.users.tolist())
    assert len(val_users) == len(test_users) == 20
    assert not val_users & test_users
    train = b.train.event_set()
    full = small_log.event_set()
    for part in (b.validation, b.test):
        fold, tgt = part.fold_in.event_set(), part.targets.event_set()
        assert fold <= train
        assert not tgt & train
        assert not fold & tgt
        for u in part.users:
            n = int(small_log.user_counts()[u])
            assert len(part.fold_in_of(u)) == int(np.floor(0.8 * n + 0.5))
            assert len(part.fold_in_of(u)) + len(part.targets_of(u)) == n
    assert train | b.validation.targets.event_set() | b.test.targets.event_set() == full
    # same seed, same split
    b2 = split_user_based(small_log, 20, 0.8, seed=11)
    assert b2.test.targets.event_set() == b.test.targets.event_set()


def test_user_based_split_skips_ineligible_users():
    # users 0..3 have one event: 0.8 * 1 rounds to 1 fold-in, no target
    events = [(u, 0) for u in range(4)] + [(u, i) for u in range(4, 10) for i in range(5)]
    log = InteractionLog.from_events(events, 10, 5)
    b = split_user_based(log, 2, 0.8, seed=0)
    assert set(b.validation.users.tolist()) | set(b.test.users.tolist()) <= set(range(4, 10))
    with pytest.raises(SplitError):
        split_user_based(log, 4, 0.8, seed=0)
    with pytest.raises(SplitError):
        split_user_based(log, 5, 0.8, seed=0)


def test_temporal_split_boundaries_and_leakage():
    Y = YEAR_SECONDS
    events = [
        (0, 0, 0), (0, 1, 5 * Y), (0, 2, 6 * Y),        # val_start = 5Y, test_start = 6Y
        (1, 1, Y), (1, 3, 6 * Y + 1),
        (2, 2, 2 * Y), (2, 0, 5 * Y + 10),
        (3, 3, 5 * Y + 5),                              # cold for validation, known for test
        (3, 1, 7 * Y),
        (4, 4, 7 * Y),                                  # cold everywhere
    ]
    log = InteractionLog.from_events(events, 5, 5)
    b = split_temporal(log, test_window=Y, val_window=Y)
    assert b.boundaries == (5 * Y, 6 * Y)
    assert b.train.timestamps.max() < 5 * Y
    assert (0, 1) in b.validation.targets.event_set()   # exactly at the val boundary
    assert (0, 2) in b.test.targets.event_set()          # exactly at the test boundary
    assert set(b.validation.users.tolist()) == {0, 2}
    assert set(b.test.users.tolist()) == {0, 1, 3}
    # test fold-in includes the earlier validation-window events
    assert (3, 3) in b.test.fold_in.event_set()
    assert (0, 1) in b.test.fold_in.event_set()
    assert b.test.targets.timestamps.min() >= 6 * Y


def test_temporal_split_errors():
    log = InteractionLog.from_events([(0, 0, 0), (0, 1, 10)], 1, 2)
    with pytest.raises(SplitError):
        split_temporal(log, 5, 5)
    with pytest.raises(ConfigError):
        split_temporal(log, 0, 5)


def test_dataset_stats_hand_computed(tiny_log):
    s = dataset_stats(tiny_log).to_dict()
    assert s == {
        "users": 6, "items": 8, "actions": 20,
        "sparsity": 1 - 20 / 48, "med_user": 3.5, "med_item": 2.0,
    }


def test_split_roundtrip(tmp_path, small_bundle):
    write_split(small_bundle, tmp_path / "s")
    back = read_split(tmp_path / "s")
    assert back.train.event_set() == small_bundle.train.event_set()
    for a, b in ((back.validation, small_bundle.validation), (back.test, small_bundle.test)):
        assert a.fold_in.event_set() == b.fold_in.event_set()
        assert a.targets.event_set() == b.targets.event_set()
    assert back.protocol_tag == "user-based"
    assert (back.train.user_count, back.train.item_count) == (small_bundle.train.user_count, small_bundle.train.item_count)


def test_subsample_users_keeps_whole_histories(small_log):
    sub = subsample_users(small_log, 1000, seed=0)
    assert len(sub) >= 1000
    raw = {(str(u), str(i)) for u, i in zip(small_log.user_ids[small_log.users], small_log.item_ids[small_log.items])}
    kept = {(str(u), str(i)) for u, i in zip(sub.user_ids[sub.users], sub.item_ids[sub.items])}
    assert kept <= raw
    counts = dict(zip(small_log.user_ids, small_log.user_counts()))
    for uid, c in zip(sub.user_ids, sub.user_counts()):
        assert counts[uid] == c


def test_synthetic_log_is_deterministic_and_skewed():
    a = synthetic_log(n_users=300, n_items=1000, mean_events=30.0, seed=5)
    b = synthetic_log(n_users=300, n_items=1000, mean_events=30.0, seed=5)
    assert a.event_set() == b.event_set()
    ic = np.sort(a.item_counts())[::-1]
    # popularity skew: the top decile of items carries far more than a tenth of events
    assert ic[:100].sum() > 0.25 * ic.sum()


def test_ingest_min_rating(tmp_path):
    p = _write(tmp_path / "r.csv", "u,i,r,t\n1,1,3.5,1\n1,2,4.0,2\n2,1,5.0,3\n2,3,1.0,4\n")
    log = ingest(p, LogFormat(",", header=True, min_rating=4.0))
    assert len(log) == 2 and list(log.item_ids) == ["1", "2"]
    with pytest.raises(EmptyDataset):
        ingest(p, LogFormat(",", header=True, min_rating=9.0))
    with pytest.raises(ConfigError):
        LogFormat(columns=("user", "item"), min_rating=4.0)
