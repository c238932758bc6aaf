import random

from hypothesis import given, settings, strategies as st

from fairsse.analysis import (
    QueryTrace,
    access_pattern_profile,
    leakage_report,
    ledger_view,
    scan_ledger,
    search_pattern_partition,
    server_view,
)
from fairsse.improved import ImprovedFramework
from fairsse.ledger import BaselineOnChain, Ledger
from fairsse.sse import Database, derive_trapdoor, setup

from conftest import random_database, random_file_id


def _db(sizes, seed=0):
    rnd = random.Random(seed)
    return Database({f"w{k}": [random_file_id(rnd) for _ in range(n)] for k, n in enumerate(sizes)})


def _trace(db, queries, p, seed=1):
    key, edb = setup(db, p=p, rng=seed)
    return server_view(edb, [derive_trapdoor(key, w) for w in queries])


def ground_truth_classes(queries):
    classes = {}
    for q, w in enumerate(queries, 1):
        classes.setdefault(w, []).append(q)
    return list(classes.values())


def test_partition_examples():
    db = _db([2, 3])
    assert search_pattern_partition(_trace(db, ["w0", "w0", "w1"], 2)) == [[1, 2], [3]]
    assert search_pattern_partition(_trace(db, ["w0", "w1"], 2)) == [[1], [2]]


def test_partition_matches_ground_truth_on_random_logs():
    rnd = random.Random(7)
    db = random_database(rnd, max_keywords=20, max_files=50)
    key, edb = setup(db, p=2, rng=2)
    words = db.keywords
    for _ in range(50):
        queries = [rnd.choice(words) for _ in range(rnd.randint(1, 30))]
        trace = server_view(edb, [derive_trapdoor(key, w) for w in queries])
        assert search_pattern_partition(trace) == ground_truth_classes(queries)


def test_size_difference_example():
    profile = access_pattern_profile(_trace(_db([3, 5]), ["w0", "w1"], 2), 2)
    entries = [q["entries"] for q in profile["queries"]]
    assert entries == [4, 6]
    assert profile["order"] == [[0, -1], [1, 0]]


def test_equal_sizes_are_indistinguishable():
    profile = access_pattern_profile(_trace(_db([4, 4]), ["w0", "w1"], 2), 2)
    assert profile["queries"][0]["entries"] == profile["queries"][1]["entries"]


@settings(max_examples=40, deadline=None)
@given(sizes=st.lists(st.integers(1, 40), min_size=1, max_size=8), p=st.sampled_from([1, 2, 3, 4, 8]))
def test_profile_is_multiple_of_p_and_preserves_order(sizes, p):
    db = _db(sizes)
    queries = db.keywords
    profile = access_pattern_profile(_trace(db, queries, p), p)
    entries = {w: q["entries"] for w, q in zip(queries, profile["queries"])}
    for w, e in entries.items():
        assert e % p == 0 and e == (len(db.ids(w)) // p + 1) * p
    for a in queries:
        for b in queries:
            if len(db.ids(a)) // p != len(db.ids(b)) // p:
                assert (entries[a] < entries[b]) == (len(db.ids(a)) < len(db.ids(b)))


def test_trace_json_roundtrip():
    trace = _trace(_db([2, 5]), ["w0", "w1", "w0"], 2)
    assert QueryTrace.from_json(trace.to_json()) == trace


def test_ledger_view_rebuilds_baseline_lookups():
    db = _db([3, 5])
    key, edb = setup(db, p=2, rng=1)
    led = Ledger()
    led.mint("client", 10_000)
    chain = BaselineOnChain(led, "client")
    chain.upload(edb)
    for w in ["w0", "w1", "w0"]:
        chain.search(derive_trapdoor(key, w), step=10, rounds=3)
    rep = leakage_report(ledger_view(led), 2)
    assert rep["search_pattern"] == [[1, 3], [2]]
    assert [q["entries"] for q in rep["access_pattern"]["queries"]] == [4, 6, 4]


def test_improved_ledger_view_is_empty_when_undisputed():
    db = _db([3, 5])
    led = Ledger()
    fw = ImprovedFramework(db, ledger=led, p=2, rng=1)
    led.mint("client", 1000)
    led.mint("server", 1000)
    for w in ["w0", "w1"]:
        fw.run_query(w)
    rep = leakage_report(ledger_view(led), 2)
    assert rep["queries"] == 0 and rep["lookups"] == 0


def test_scan_ledger_counts_value_hits_only():
    led = Ledger()
    led.mint("c", 0)
    led.store_item("c", "alpha-key", b"xxALPHAxx")
    led.store_item("c", "k2", b"ALPHA and BETA")
    assert scan_ledger(led, {"f": [b"ALPHA", b"BETA", b"GAMMA"], "k": [b"alpha"]}) == {"f": 3, "k": 0}
