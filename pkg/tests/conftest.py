import random
from pathlib import Path

import pytest

from fairsse.sse import Database, SENTINEL, VIRTUAL_TAG

GOLDEN = Path(__file__).parent / "golden"
REPO = Path(__file__).resolve().parent.parent


def random_file_id(rnd: random.Random) -> bytes:
    while True:
        fid = rnd.randbytes(16)
        if fid != SENTINEL and fid[0] != VIRTUAL_TAG:
            return fid


def random_database(rnd: random.Random, max_keywords=50, max_files=200, min_word=5) -> Database:
    files = [random_file_id(rnd) for _ in range(rnd.randint(1, max_files))]
    mapping = {}
    for k in range(rnd.randint(0, max_keywords)):
        word = f"kw{k:03d}" + "".join(rnd.choice("abcdefghij") for _ in range(max(0, min_word - 5)))
        mapping[word] = rnd.sample(files, rnd.randint(1, min(len(files), 40)))
    return Database(mapping)


def plaintext_scan(db: Database, w: str) -> list[bytes]:
    """Reference answer straight from the plaintext inverted index."""
    for keyword, ids in db.items():
        if keyword == w:
            return list(ids)
    return []


@pytest.fixture
def small_db() -> Database:
    rnd = random.Random(11)
    ids = [random_file_id(rnd) for _ in range(9)]
    return Database(
        {
            "alpha": ids[:5],
            "bravo": ids[5:6],
            "charlie": ids[2:9],
            "delta": ids[:3],
        }
    )


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    verdicts = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_c" not in nodeid or rep.when not in ("call", "setup"):
                continue
            crit = int(nodeid.split("::test_c")[1][:2])
            verdicts[crit] = verdicts.get(crit, True) and rep.passed
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(verdicts):
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if verdicts[crit] else 'FAIL'}")
