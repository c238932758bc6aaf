"""Encrypted inverted index: the counter-labelled, block-padded SSE scheme.

Each keyword's identifier list is cut into ``len // p + 1`` blocks of ``p``
identifiers (the last block padded with the sentinel), and every block is stored
as a row ``(label, payload, nonce)`` with

    label   = F(K1, counter)
    payload = (id_1 || ... || id_p) XOR G(K2, nonce)

where ``K1 = F(K, 0x01 || w)`` and ``K2 = F(K, 0x02 || w)``. Rows of all keywords
are merged and sorted by label, so the index reveals only its size.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field

from .crypto.prf import DEFAULT_LAMBDA, TAG_LEN, key_length, prf_f, prf_g_expand, xor_bytes
from .crypto.rng import as_rng, draw
from .errors import DatabaseError, DecodeError, EmptyKeywordError, LabelCollisionError

ID_WIDTH = 16
SENTINEL = b"\xff" * ID_WIDTH
VIRTUAL_TAG = 0xFE
EDB_MAGIC = b"EDB1"
_HEADER = struct.Struct(">4sHIHQ")


def is_virtual_id(fid: bytes) -> bool:
    return len(fid) == ID_WIDTH and fid[0] == VIRTUAL_TAG


def check_file_id(fid: bytes, allow_virtual: bool = False) -> bytes:
    if not isinstance(fid, (bytes, bytearray)) or len(fid) != ID_WIDTH:
        raise DatabaseError(f"file ids must be {ID_WIDTH} bytes")
    fid = bytes(fid)
    if fid == SENTINEL:
        raise DatabaseError("the all-0xFF padding sentinel cannot be used as a file id")
    if fid[0] == VIRTUAL_TAG and not allow_virtual:
        raise DatabaseError("file ids starting with 0xFE are reserved for virtual identifiers")
    return fid


class Database:
    """Plaintext inverted index ``keyword -> ordered, de-duplicated file ids``."""

    def __init__(self, mapping: Mapping[str, Iterable[bytes]] | None = None, *, allow_virtual: bool = False):
        self._entries: dict[str, tuple[bytes, ...]] = {}
        for w, ids in (mapping or {}).items():
            if not isinstance(w, str) or not w:
                raise DatabaseError("keywords must be non-empty strings")
            seen = dict.fromkeys(check_file_id(i, allow_virtual) for i in ids)
            if not seen:
                raise DatabaseError(f"keyword {w!r} has no file ids")
            self._entries[w] = tuple(seen)

    @property
    def keywords(self) -> list[str]:
        return list(self._entries)

    def ids(self, w: str) -> tuple[bytes, ...]:
        return self._entries.get(w, ())

    def items(self):
        return self._entries.items()

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, w) -> bool:
        return w in self._entries

    def __eq__(self, other) -> bool:
        return isinstance(other, Database) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"Database({len(self)} keywords)"

    def to_json_dict(self) -> dict[str, list[str]]:
        return {w: [i.hex() for i in ids] for w, ids in self._entries.items()}

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Iterable[str]]) -> "Database":
        return cls({w: [bytes.fromhex(i) for i in ids] for w, ids in data.items()})


@dataclass(frozen=True)
class IndexRow:
    label: bytes
    payload: bytes
    nonce: bytes


@dataclass(frozen=True)
class EncryptedIndex:
    rows: tuple[IndexRow, ...]
    block_size: int
    lam: int = DEFAULT_LAMBDA
    id_width: int = ID_WIDTH
    _by_label: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_label = {}
        for row in self.rows:
            if row.label in by_label:
                raise LabelCollisionError(f"duplicate label {row.label.hex()}")
            by_label[row.label] = row
        object.__setattr__(self, "_by_label", by_label)

    def get(self, label: bytes) -> IndexRow | None:
        return self._by_label.get(label)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def row_width(self) -> int:
        return TAG_LEN + self.block_size * self.id_width + self.lam // 8

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(EDB_MAGIC, self.lam, self.block_size, self.id_width, len(self.rows))
        return head + b"".join(r.label + r.payload + r.nonce for r in self.rows)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncryptedIndex":
        if len(raw) < _HEADER.size:
            raise DecodeError("truncated index header")
        magic, lam, p, width, count = _HEADER.unpack_from(raw)
        if magic != EDB_MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        nlen = key_length(lam)
        plen = p * width
        rw = TAG_LEN + plen + nlen
        body = raw[_HEADER.size :]
        if p < 1 or len(body) != count * rw:
            raise DecodeError("index body length does not match header")
        rows = []
        for k in range(count):
            chunk = body[k * rw : (k + 1) * rw]
            rows.append(IndexRow(chunk[:TAG_LEN], chunk[TAG_LEN : TAG_LEN + plen], chunk[TAG_LEN + plen :]))
        return cls(tuple(rows), p, lam, width)

    def to_json(self) -> str:
        doc = {
            "format": "EDB1",
            "lam": self.lam,
            "block_size": self.block_size,
            "id_width": self.id_width,
            "rows": [[r.label.hex(), r.payload.hex(), r.nonce.hex()] for r in self.rows],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EncryptedIndex":
        doc = json.loads(text)
        rows = tuple(IndexRow(*(bytes.fromhex(x) for x in row)) for row in doc["rows"])
        return cls(rows, doc["block_size"], doc["lam"], doc["id_width"])


@dataclass(frozen=True)
class Trapdoor:
    k1: bytes
    k2: bytes
    counter: int = 0

    def to_bytes(self) -> bytes:
        return self.k1 + self.k2 + self.counter.to_bytes(8, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Trapdoor":
        if len(raw) != 2 * TAG_LEN + 8:
            raise DecodeError("trapdoor encoding must be 72 bytes")
        return cls(raw[:TAG_LEN], raw[TAG_LEN : 2 * TAG_LEN], int.from_bytes(raw[2 * TAG_LEN :], "big"))


@dataclass(frozen=True)
class SearchPaging:
    rounds: int
    step: int

    def __post_init__(self):
        if self.rounds < 1 or self.step < 1:
            raise ValueError("rounds and step must both be positive")

    @property
    def budget(self) -> int:
        return self.rounds * self.step


def _counter_bytes(c: int) -> bytes:
    return c.to_bytes(8, "big")


def keyword_keys(key: bytes, w: str) -> tuple[bytes, bytes]:
    if not w:
        raise EmptyKeywordError("keyword must be non-empty")
    wb = w.encode("utf-8")
    return prf_f(key, b"\x01" + wb), prf_f(key, b"\x02" + wb)


def blocks_for(ids: tuple[bytes, ...], p: int) -> list[tuple[bytes, ...]]:
    """Split into ``len(ids) // p + 1`` blocks of exactly p ids, sentinel-padded."""
    nblocks = len(ids) // p + 1
    padded = list(ids) + [SENTINEL] * (nblocks * p - len(ids))
    return [tuple(padded[i * p : (i + 1) * p]) for i in range(nblocks)]


def keygen(rng=None, lam: int = DEFAULT_LAMBDA) -> bytes:
    return draw(as_rng(rng), key_length(lam))


def setup(
    db: Database,
    lam: int = DEFAULT_LAMBDA,
    p: int = 4,
    rng=None,
    key: bytes | None = None,
) -> tuple[bytes, EncryptedIndex]:
    if p < 1:
        raise ValueError("block size p must be positive")
    rng = as_rng(rng)
    nlen = key_length(lam)
    if key is None:
        key = draw(rng, nlen)
    elif len(key) != nlen:
        raise ValueError(f"master key must be {nlen} bytes for lambda={lam}")
    rows: dict[bytes, IndexRow] = {}
    for w, ids in db.items():
        k1, k2 = keyword_keys(key, w)
        for c, block in enumerate(blocks_for(ids, p)):
            r = draw(rng, nlen)
            plain = b"".join(block)
            label = prf_f(k1, _counter_bytes(c))
            if label in rows:
                raise LabelCollisionError(f"label collision while indexing {w!r}; re-key and retry")
            rows[label] = IndexRow(label, xor_bytes(plain, prf_g_expand(k2, r, len(plain))), r)
    ordered = tuple(rows[label] for label in sorted(rows))
    return key, EncryptedIndex(ordered, p, lam)


def derive_trapdoor(key: bytes, w: str) -> Trapdoor:
    k1, k2 = keyword_keys(key, w)
    return Trapdoor(k1, k2, 0)


@dataclass(frozen=True)
class Lookup:
    """What a searcher touches: every label probed and the rows it hit."""

    labels: tuple[bytes, ...]
    rows: tuple[IndexRow, ...]


def lookup(edb: EncryptedIndex, t: Trapdoor, paging: SearchPaging | None = None) -> Lookup:
    budget = paging.budget if paging else None
    labels, rows = [], []
    c = t.counter
    while budget is None or len(rows) < budget:
        label = prf_f(t.k1, _counter_bytes(c))
        labels.append(label)
        row = edb.get(label)
        if row is None:
            break
        rows.append(row)
        c += 1
    return Lookup(tuple(labels), tuple(rows))


def unmask(row: IndexRow, k2: bytes) -> bytes:
    return xor_bytes(row.payload, prf_g_expand(k2, row.nonce, len(row.payload)))


def split_ids(packed: bytes, width: int = ID_WIDTH) -> list[bytes]:
    return [packed[i : i + width] for i in range(0, len(packed), width)]


def strip_padding(ids: Iterable[bytes]) -> list[bytes]:
    return [i for i in ids if i != SENTINEL]


def search(edb: EncryptedIndex, t: Trapdoor, paging: SearchPaging | None = None) -> list[bytes]:
    """Identifiers matching the trapdoor, padding removed, block order kept.

    ``paging=None`` searches until the first missing label.
    """
    found = lookup(edb, t, paging)
    ids: list[bytes] = []
    for row in found.rows:
        ids.extend(split_ids(unmask(row, t.k2), edb.id_width))
    return strip_padding(ids)


def expected_rows(db: Database, p: int) -> int:
    return sum(len(ids) // p + 1 for _, ids in db.items())
