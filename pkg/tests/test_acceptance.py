"""End-to-end acceptance checks, one test per criterion.

The conftest terminal-summary hook prints a PASS/FAIL line for each of them.
"""

import itertools
import json
import random
import time

import pytest

from fairsse.analysis import access_pattern_profile, search_pattern_partition, server_view
from fairsse.crypto import DeterministicRng
from fairsse.crypto.commitment import commit_msg, open_commitment
from fairsse.crypto.elgamal import (
    PROOF_LEN,
    DecryptionProof,
    SigmaProofBackend,
    enc_keygen,
    pke_encrypt,
)
from fairsse.crypto.signature import check_sig, sig_keygen, sign
from fairsse.errors import DecodeError
from fairsse.harness import ADVERSARY_CATALOG, ScenarioConfig, dump_report, run_scenario
from fairsse.initial import COLLUDE, WRONG, InitialFramework, Phase
from fairsse.ledger import Ledger
from fairsse.sse import Database, derive_trapdoor, search, setup

from conftest import GOLDEN, REPO, plaintext_scan, random_database, random_file_id

SUITE_BUDGET = 120.0


def _inline(db: Database) -> dict:
    return {w: [i.hex() for i in ids] for w, ids in db.items()}


def _classes(queries):
    out = {}
    for q, w in enumerate(queries, 1):
        out.setdefault(w, []).append(q)
    return list(out.values())


def _sized_db(sizes, seed=0):
    rnd = random.Random(seed)
    return Database({f"w{k}": [random_file_id(rnd) for _ in range(n)] for k, n in enumerate(sizes)})


# -- 1: correctness ------------------------------------------------------------------


def test_c01_search_matches_plaintext_on_1000_random_databases():
    rnd = random.Random(1001)
    start = time.perf_counter()
    for trial in range(1000):
        db = random_database(rnd, max_keywords=50, max_files=200)
        p = rnd.choice([1, 2, 4, 8])
        key, edb = setup(db, p=p, rng=trial)
        for w in db.keywords + ["never-indexed"]:
            assert search(edb, derive_trapdoor(key, w)) == plaintext_scan(db, w), (trial, w)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


# -- 2: index size -------------------------------------------------------------------


def test_c02_row_count_formula():
    rnd = random.Random(2002)
    for trial in range(300):
        db = random_database(rnd)
        p = rnd.choice([1, 2, 3, 4, 8])
        _, edb = setup(db, p=p, rng=trial)
        assert len(edb) == sum(len(ids) // p + 1 for _, ids in db.items())


# -- 3: leakage ----------------------------------------------------------------------


@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_c03_access_profile_and_search_partition(p):
    db = _sized_db([p + 1, 2 * p + 1])
    key, edb = setup(db, p=p, rng=p)
    profile = access_pattern_profile(server_view(edb, [derive_trapdoor(key, w) for w in ("w0", "w1")]), p)
    small, large = (q["entries"] for q in profile["queries"])
    assert large - small == p

    rnd = random.Random(3000 + p)
    db = random_database(rnd, max_keywords=30, max_files=80)
    key, edb = setup(db, p=p, rng=1)
    for _ in range(250):  # 4 block sizes x 250 = 10^3 logs
        queries = [rnd.choice(db.keywords) for _ in range(rnd.randint(1, 25))]
        trace = server_view(edb, [derive_trapdoor(key, w) for w in queries])
        assert search_pattern_partition(trace) == _classes(queries)


# -- 4: initial framework fairness ---------------------------------------------------


def _initial(db, n, behaviors):
    led = Ledger()
    fw = InitialFramework(db, n, ledger=led, p=2, rng=n, behaviors=behaviors)
    led.mint("client", 1000)
    return fw, led


@pytest.mark.parametrize("n", [2, 3, 4])
def test_c04_initial_fairness_matrix(small_db, n):
    truth = sorted(small_db.ids("charlie"))
    fee = Ledger().pricing.search_fee
    for cheat in (WRONG, COLLUDE):
        for size in range(1, n):
            for subset in itertools.combinations(range(n), size):
                fw, led = _initial(small_db, n, {i: cheat for i in subset})
                s = fw.run_query("charlie")
                assert s.phase == Phase.DISPUTE_OFFLINE and s.payments == {}, (cheat, subset)
                assert all(led.balance(f"server-{i}") == 0 for i in range(n))

    fw, led = _initial(small_db, n, None)
    s = fw.run_query("charlie")
    assert s.phase == Phase.PAID and s.retrieved == truth
    assert all(led.balance(f"server-{i}") == fee for i in range(n))

    fw, led = _initial(small_db, n, {i: COLLUDE for i in range(n)})
    s = fw.run_query("charlie")
    assert s.phase == Phase.PAID and s.retrieved != truth


# -- 5: adversary catalog ------------------------------------------------------------


def test_c05_catalog_matches_golden(small_db):
    golden = json.loads((GOLDEN / "catalog_outcomes.json").read_text())
    assert len(ADVERSARY_CATALOG) == 10
    for label in ADVERSARY_CATALOG:
        want = golden[label]
        cfg = {"framework": want["framework"], "seed": 3, "p": 2, "queries": ["alpha"], "database": _inline(small_db)}
        if want["framework"] == "initial":
            cfg["n"] = want["n"]
        got = run_scenario(ScenarioConfig.from_dict({**cfg, "adversary": label}))["sessions"][0]
        fields = ["terminal_state", "balance_delta"]
        fields += ["undetected_cheat", "frozen_escrow"] if want["framework"] == "initial" else ["settlement", "dispute_step"]
        for f in fields:
            assert got[f] == want[f], (label, f)


# -- 6: conservation -----------------------------------------------------------------


def test_c06_conservation_after_every_event(small_db):
    bases = [{"database": _inline(small_db)}, {"corpus": str(REPO / "samples" / "corpus")}]
    queries = {"database": ["alpha", "charlie", "alpha", "zulu"], "corpus": ["harbor", "orchard", "absent"]}
    runs = 0
    for base in bases:
        q = queries["database" if "database" in base else "corpus"]
        for label in ADVERSARY_CATALOG:
            fw = "initial" if label.startswith("Initial") else "improved"
            rep = run_scenario(ScenarioConfig.from_dict({**base, "framework": fw, "seed": 6, "queries": q, "adversary": label}))
            # checked once per ledger event plus a final check at the end of the run
            assert rep["conservation"]["ok"] and rep["conservation"]["checks"] == len(rep["trace"]) + 1, label
            runs += 1
        rep = run_scenario(ScenarioConfig.from_dict({**base, "framework": "baseline-onchain", "seed": 6, "queries": q}))
        assert rep["conservation"]["ok"] and rep["conservation"]["checks"] == len(rep["trace"]) + 1
        runs += 1
    assert runs == 22


# -- 7: ledger privacy ---------------------------------------------------------------


def test_c07_ledger_privacy_scan():
    rnd = random.Random(7007)
    for trial in range(5):
        db = random_database(rnd, max_keywords=12, max_files=40)
        while not db.keywords:
            db = random_database(rnd, max_keywords=12, max_files=40)
        queries = [rnd.choice(db.keywords) for _ in range(4)]
        base = {"framework": "improved", "seed": trial, "p": 2, "queries": queries, "database": _inline(db)}
        quiet = run_scenario(ScenarioConfig.from_dict(base))
        assert all(s["dispute_step"] is None for s in quiet["sessions"])
        assert quiet["privacy"]["scan"] == {"file_ids": 0, "keywords": 0, "keyword_keys": 0, "trapdoors": 0}
        assert quiet["privacy"]["exposure"]["index_copies_on_ledger"] == 0

        one = run_scenario(ScenarioConfig.from_dict({**base, "queries": queries[:1], "adversary": "ServerWrongIds"}))
        exposure = one["privacy"]["exposure"]
        assert exposure["disputed_sessions"] == 1
        assert exposure["trapdoors_on_ledger"] == 1 and exposure["index_copies_on_ledger"] == 1


# -- 8: primitives -------------------------------------------------------------------


def test_c08a_commitment_roundtrip():
    rng = DeterministicRng(81)
    rnd = random.Random(81)
    start = time.perf_counter()
    ok = 0
    for _ in range(10_000):
        m = rnd.randbytes(rnd.randint(0, 64))
        c, key = commit_msg(m, rng)
        ok += open_commitment(c, key, m)
    assert ok == 10_000
    assert time.perf_counter() - start < SUITE_BUDGET


def test_c08b_signature_forgery_over_10k_mutations():
    rng = DeterministicRng(82)
    rnd = random.Random(82)
    keys = [sig_keygen(rng) for _ in range(8)]
    start = time.perf_counter()
    accepted = 0
    for trial in range(10_000):
        kp = keys[trial % len(keys)]
        m = rnd.randbytes(rnd.randint(1, 80))
        sig = sign(kp.signing_key, m)
        vk, msg = kp.verify_key, m
        kind = trial % 5
        if kind == 0:
            bit = rnd.randrange(len(sig) * 8)
            sig = bytes(b ^ (1 << (bit % 8)) if k == bit // 8 else b for k, b in enumerate(sig))
        elif kind == 1:
            bit = rnd.randrange(len(m) * 8)
            msg = bytes(b ^ (1 << (bit % 8)) if k == bit // 8 else b for k, b in enumerate(m))
        elif kind == 2:
            vk = keys[(trial + 1) % len(keys)].verify_key
        elif kind == 3:
            sig = rnd.randbytes(64)
        else:
            msg = m + b"\x00"
        accepted += check_sig(vk, msg, sig)
    assert accepted == 0
    assert time.perf_counter() - start < SUITE_BUDGET


def test_c08c_decryption_proof_soundness_over_10k_trials():
    backend = SigmaProofBackend()
    rng = DeterministicRng(83)
    rnd = random.Random(83)
    keys = enc_keygen(rng)
    other = enc_keygen(rng)
    pool = []
    for _ in range(20):
        m = rnd.randbytes(48)
        c = pke_encrypt(keys.public, m, rng)
        pool.append((m, c, backend.prove(keys, c, m, rng)))

    def flip(data, bit):
        return bytes(b ^ (1 << (bit % 8)) if k == bit // 8 else b for k, b in enumerate(data))

    start = time.perf_counter()
    accepted = 0
    for trial in range(10_000):
        m, c, proof = pool[trial % len(pool)]
        kind = trial % 6
        pk, claim = keys.public, m
        if kind == 0:  # false plaintext with the prover's own proof
            claim = flip(m, rnd.randrange(len(m) * 8))
            proof = backend.prove(keys, c, claim, rng)
        elif kind == 1:  # true plaintext, tampered transcript
            proof = DecryptionProof(flip(proof.transcript, rnd.randrange(PROOF_LEN * 8)))
        elif kind == 2:  # random transcript
            proof = DecryptionProof(rnd.randbytes(PROOF_LEN))
        elif kind == 3:  # proof lifted from another ciphertext
            m2, c2, proof = pool[(trial + 1) % len(pool)]
            claim = m2
        elif kind == 4:  # verified under the wrong key
            pk = other.public
        else:  # tampered ciphertext body, original claim
            c = c[:-1] + bytes([c[-1] ^ 1])
        try:
            accepted += backend.verify(pk, c, claim, proof)
        except DecodeError:
            pass
    assert accepted == 0
    assert time.perf_counter() - start < SUITE_BUDGET


# -- 9: determinism ------------------------------------------------------------------


def test_c09_reports_byte_identical_per_seed(small_db):
    configs = [{"framework": "baseline-onchain"}]
    configs += [{"framework": "improved", "adversary": a} for a in ADVERSARY_CATALOG if not a.startswith("Initial")]
    configs += [{"framework": "initial", "adversary": a} for a in ("HonestAll", "InitialOneServerWrongCommit", "InitialAllCollude")]
    for extra in configs:
        cfg = {"seed": 99, "queries": ["alpha", "delta"], "database": _inline(small_db), **extra}
        assert dump_report(run_scenario(ScenarioConfig.from_dict(cfg))) == dump_report(
            run_scenario(ScenarioConfig.from_dict(cfg))
        ), extra


# -- 10: on-chain cost ---------------------------------------------------------------


def test_c10_baseline_costs_more_than_improved():
    rnd = random.Random(1010)
    desk = random_database(rnd, max_keywords=50, max_files=200)
    while len(desk) < 20:
        desk = random_database(rnd, max_keywords=50, max_files=200)
    scripts = [
        {"database": _inline(desk), "queries": [rnd.choice(desk.keywords) for _ in range(10)]},
        {"corpus": str(REPO / "samples" / "corpus"), "queries": ["harbor", "orchard", "copper", "harbor", "absent"]},
    ]
    for script in scripts:
        rep = run_scenario(ScenarioConfig.from_dict({"framework": "improved", "seed": 10, "p": 2, "compare_baseline": True, **script}))
        assert all(s["dispute_step"] is None for s in rep["sessions"])
        improved, baseline = rep["cost"], rep["baseline_cost"]
        assert baseline["replicated_storage_bytes"] > improved["replicated_storage_bytes"]
        assert baseline["contract_steps"] > improved["contract_steps"]
