"""Search-pattern and access-pattern statistics over observed query traces.

Two observer views are supported: the *server view* (labels probed and rows hit
while searching a held index) and the *ledger-only view* (whatever any chain
reader can reconstruct from the public event log).
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass

from .ledger import Ledger
from .sse import EncryptedIndex, Trapdoor, lookup


@dataclass(frozen=True)
class QueryObservation:
    query: int
    labels: tuple[bytes, ...]
    rows: int
    blocks: int

    def to_dict(self) -> dict:
        return {"query": self.query, "labels": [x.hex() for x in self.labels], "rows": self.rows, "blocks": self.blocks}

    @classmethod
    def from_dict(cls, d: dict) -> "QueryObservation":
        return cls(d["query"], tuple(bytes.fromhex(x) for x in d["labels"]), d["rows"], d["blocks"])


@dataclass(frozen=True)
class QueryTrace:
    observations: tuple[QueryObservation, ...]

    def __len__(self) -> int:
        return len(self.observations)

    def to_json(self) -> str:
        return json.dumps({"observations": [o.to_dict() for o in self.observations]}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "QueryTrace":
        doc = json.loads(text)
        return cls(tuple(QueryObservation.from_dict(o) for o in doc["observations"]))


def server_view(edb: EncryptedIndex, trapdoors: Iterable[Trapdoor], start: int = 1) -> QueryTrace:
    obs = []
    for q, t in enumerate(trapdoors, start):
        hit = lookup(edb, t)
        obs.append(QueryObservation(q, hit.labels, len(hit.rows), len(hit.rows)))
    return QueryTrace(tuple(obs))


def ledger_view(ledger: Ledger) -> QueryTrace:
    """Rebuild lookups from public ``contract_get`` events (key ``query:label``)."""
    order: list[str] = []
    labels: dict[str, list[bytes]] = {}
    for ev in ledger.events:
        if ev.op != "contract_get":
            continue
        query, _, label = ev.key.partition(":")
        if query not in labels:
            order.append(query)
            labels[query] = []
        labels[query].append(bytes.fromhex(label))
    obs = []
    for q, name in enumerate(order, 1):
        seq = labels[name]
        # every probe hits except the final one, which ends the scan with a miss
        hits = sum(1 for lab in seq if ledger.get_item("edb/" + lab.hex()) is not None)
        obs.append(QueryObservation(q, tuple(seq), hits, hits))
    return QueryTrace(tuple(obs))


def search_pattern_partition(trace: QueryTrace) -> list[list[int]]:
    """Group queries whose first probed label is identical, in first-seen order."""
    classes: dict[bytes, list[int]] = {}
    for o in trace.observations:
        classes.setdefault(o.labels[0] if o.labels else b"", []).append(o.query)
    return list(classes.values())


def access_pattern_profile(trace: QueryTrace, p: int) -> dict:
    sizes = [{"query": o.query, "blocks": o.blocks, "entries": o.blocks * p} for o in trace.observations]
    entries = [s["entries"] for s in sizes]
    order = [[(a > b) - (a < b) for b in entries] for a in entries]
    return {"block_size": p, "queries": sizes, "order": order}


def leakage_report(trace: QueryTrace, p: int) -> dict:
    return {
        "queries": len(trace),
        "lookups": sum(len(o.labels) for o in trace.observations),
        "search_pattern": search_pattern_partition(trace),
        "access_pattern": access_pattern_profile(trace, p),
    }


def scan_ledger(ledger: Ledger, patterns: dict[str, Iterable[bytes]]) -> dict[str, int]:
    """Count stored item values containing each pattern, per pattern family.

    Only item values are scanned; item keys are contract-chosen names.
    """
    values = [item.data for item in ledger.items.values()]
    counts = {}
    for family, pats in patterns.items():
        counts[family] = sum(1 for pat in pats if pat for v in values if pat in v)
    return counts


def index_copies(ledger: Ledger, magic: bytes = b"EDB1") -> int:
    return sum(1 for item in ledger.items.values() if item.data.startswith(magic))
