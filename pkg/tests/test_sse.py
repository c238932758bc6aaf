import random

import pytest
from hypothesis import given, settings, strategies as st

from fairsse.crypto import DeterministicRng
from fairsse.errors import DatabaseError, DecodeError, EmptyKeywordError, LabelCollisionError
from fairsse.sse import (
    SENTINEL,
    Database,
    EncryptedIndex,
    IndexRow,
    SearchPaging,
    Trapdoor,
    blocks_for,
    derive_trapdoor,
    expected_rows,
    keygen,
    lookup,
    search,
    setup,
    split_ids,
    strip_padding,
    unmask,
)

from conftest import plaintext_scan, random_database, random_file_id

ids_strategy = st.lists(
    st.binary(min_size=16, max_size=16).filter(lambda b: b != SENTINEL and b[0] != 0xFE), max_size=30, unique=True
)
db_strategy = st.dictionaries(st.text("abcdefgh", min_size=1, max_size=6), ids_strategy.filter(bool), max_size=8)


def _ids(n, seed=0):
    rnd = random.Random(seed)
    return [random_file_id(rnd) for _ in range(n)]


# -- Database ----------------------------------------------------------------------


def test_database_validation():
    with pytest.raises(DatabaseError):
        Database({"w": [b"short"]})
    with pytest.raises(DatabaseError):
        Database({"w": [SENTINEL]})
    with pytest.raises(DatabaseError):
        Database({"w": [b"\xfe" + b"\x00" * 15]})
    with pytest.raises(DatabaseError):
        Database({"": _ids(1)})
    with pytest.raises(DatabaseError):
        Database({"w": []})


def test_database_dedups_in_order_and_roundtrips_json():
    a, b = _ids(2)
    db = Database({"w": [a, b, a]})
    assert db.ids("w") == (a, b)
    assert Database.from_json_dict(db.to_json_dict()) == db


# -- setup -------------------------------------------------------------------------


def test_five_ids_block_size_two():
    f = _ids(5)
    key, edb = setup(Database({"w": f}), p=2, rng=1)
    assert len(edb) == 3
    t = derive_trapdoor(key, "w")
    hit = lookup(edb, t)
    last = split_ids(unmask(hit.rows[-1], t.k2))
    assert last == [f[4], SENTINEL]
    assert blocks_for(tuple(f), 2)[-1] == (f[4], SENTINEL)


def test_empty_database_gives_empty_index():
    _, edb = setup(Database(), rng=1)
    assert len(edb) == 0
    assert EncryptedIndex.from_bytes(edb.to_bytes()).rows == ()


def test_random_db_row_count():
    rnd = random.Random(20)
    pool = _ids(60, 1)
    db = Database({f"k{i}": rnd.sample(pool, rnd.randint(1, 30)) for i in range(20)})
    _, edb = setup(db, p=4, rng=2)
    assert len(edb) == sum(len(ids) // 4 + 1 for _, ids in db.items()) == expected_rows(db, 4)


def test_rows_are_sorted_by_label():
    key, edb = setup(Database({"a": _ids(7), "b": _ids(3, 5)}), p=2, rng=3)
    labels = [r.label for r in edb.rows]
    assert labels == sorted(labels)


def test_rejects_bad_parameters():
    db = Database({"a": _ids(2)})
    with pytest.raises(ValueError):
        setup(db, p=0)
    with pytest.raises(ValueError):
        setup(db, key=b"\x00" * 16)  # lam=256 needs 32 bytes


@pytest.mark.parametrize("lam", [128, 192, 256])
def test_all_security_levels(lam):
    db = Database({"a": _ids(5)})
    key, edb = setup(db, lam=lam, p=2, rng=4)
    assert len(key) == lam // 8
    assert search(edb, derive_trapdoor(key, "a")) == list(db.ids("a"))
    assert EncryptedIndex.from_bytes(edb.to_bytes()) == edb


# -- trapdoors ---------------------------------------------------------------------


def test_trapdoor_determinism_and_separation():
    k, k2 = keygen(1), keygen(2)
    assert derive_trapdoor(k, "w") == derive_trapdoor(k, "w")
    assert derive_trapdoor(k, "w") != derive_trapdoor(k2, "w")
    with pytest.raises(EmptyKeywordError):
        derive_trapdoor(k, "")


def test_trapdoor_k1_no_collisions_10k():
    k = keygen(3)
    rnd = random.Random(4)
    words = {"".join(rnd.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(12)) for _ in range(10_000)}
    assert len({derive_trapdoor(k, w).k1 for w in words}) == len(words)


def test_trapdoor_encoding():
    t = derive_trapdoor(keygen(1), "w")
    assert len(t.to_bytes()) == 72
    assert Trapdoor.from_bytes(t.to_bytes()) == t
    with pytest.raises(DecodeError):
        Trapdoor.from_bytes(b"\x00" * 71)


# -- search ------------------------------------------------------------------------


def test_search_examples():
    f = _ids(5)
    key, edb = setup(Database({"w": f}), p=2, rng=5)
    assert search(edb, derive_trapdoor(key, "w")) == f
    assert search(edb, derive_trapdoor(key, "absent")) == []


def test_paging_single_round_single_step():
    f = _ids(5)
    key, edb = setup(Database({"w": f}), p=2, rng=5)
    t = derive_trapdoor(key, "w")
    first = lookup(edb, t, SearchPaging(rounds=1, step=1))
    assert len(first.rows) == 1
    assert split_ids(unmask(first.rows[0], t.k2)) == f[:2]
    assert search(edb, t, SearchPaging(rounds=1, step=1)) == f[:2]
    with pytest.raises(ValueError):
        SearchPaging(0, 1)


def test_lookup_probes_one_missing_label():
    key, edb = setup(Database({"w": _ids(3)}), p=2, rng=6)
    hit = lookup(edb, derive_trapdoor(key, "w"))
    assert len(hit.rows) == 2 and len(hit.labels) == 3


def test_strip_padding_examples():
    f = _ids(1)[0]
    assert strip_padding([f, SENTINEL]) == [f]
    assert strip_padding([SENTINEL, SENTINEL]) == []
    assert strip_padding([f]) == [f]


def test_random_databases_against_plaintext_oracle():
    rnd = random.Random(30)
    for trial in range(40):
        db = random_database(rnd, max_keywords=15, max_files=60)
        p = rnd.choice([1, 2, 4, 8])
        key, edb = setup(db, p=p, rng=trial)
        assert len(edb) == expected_rows(db, p)
        for w in db.keywords + ["missing"]:
            assert search(edb, derive_trapdoor(key, w)) == plaintext_scan(db, w)


@settings(max_examples=60, deadline=None)
@given(mapping=db_strategy, p=st.sampled_from([1, 2, 3, 4, 8]), seed=st.integers(0, 2**32))
def test_search_correct_and_rows_match_formula(mapping, p, seed):
    db = Database(mapping)
    key, edb = setup(db, p=p, rng=seed)
    assert len(edb) == sum(len(ids) // p + 1 for _, ids in db.items())
    for w in db.keywords:
        assert search(edb, derive_trapdoor(key, w)) == list(db.ids(w))


@settings(max_examples=40, deadline=None)
@given(mapping=db_strategy, seed=st.integers(0, 2**32))
def test_index_reveals_only_its_size(mapping, seed):
    # every row has the same width; labels and nonces are fixed-length
    db = Database(mapping)
    _, edb = setup(db, p=4, rng=seed)
    assert {(len(r.label), len(r.payload), len(r.nonce)) for r in edb.rows} <= {(32, 64, 32)}


# -- serialization -----------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(mapping=db_strategy, seed=st.integers(0, 2**32))
def test_index_binary_and_json_roundtrip(mapping, seed):
    _, edb = setup(Database(mapping), p=3, rng=seed)
    assert EncryptedIndex.from_bytes(edb.to_bytes()) == edb
    assert EncryptedIndex.from_json(edb.to_json()) == edb


def test_index_decoding_errors():
    key, edb = setup(Database({"w": _ids(3)}), p=2, rng=7)
    raw = edb.to_bytes()
    with pytest.raises(DecodeError):
        EncryptedIndex.from_bytes(raw[:5])
    with pytest.raises(DecodeError):
        EncryptedIndex.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DecodeError):
        EncryptedIndex.from_bytes(raw[:-1])


def test_duplicate_labels_rejected():
    row = IndexRow(b"\x01" * 32, b"\x00" * 16, b"\x00" * 32)
    with pytest.raises(LabelCollisionError):
        EncryptedIndex((row, row), 1)


def test_setup_is_seed_deterministic():
    db = Database({"a": _ids(4), "b": _ids(2, 3)})
    assert setup(db, p=2, rng=DeterministicRng(1)) == setup(db, p=2, rng=DeterministicRng(1))
    assert setup(db, p=2, rng=1)[1].to_bytes() != setup(db, p=2, rng=2)[1].to_bytes()
