"""Corpus ingestion, scenario configs, the adversary catalog and end-to-end runs."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .analysis import index_copies, leakage_report, ledger_view, scan_ledger, server_view
from .crypto.elgamal import make_backend
from .crypto.prf import SUPPORTED_LAMBDAS, hash_h
from .crypto.rng import DeterministicRng
from .errors import ConfigError, EmptyCorpusError
from .improved import (
    C_BOGUS_TRAPDOOR,
    C_FALSE_DISPUTE,
    C_HONEST,
    C_WITHHOLD,
    S_GARBAGE,
    S_HONEST,
    S_SILENT,
    S_STALE_INDEX,
    S_WRONG_IDS,
    ImprovedFramework,
)
from .initial import COLLUDE, HONEST, SERVER_BEHAVIORS, WRONG, InitialFramework, Phase
from .ledger import OPERATOR, BaselineOnChain, Ledger, PricingConfig
from .sse import ID_WIDTH, SENTINEL, VIRTUAL_TAG, Database, derive_trapdoor, setup

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FRAMEWORKS = ("baseline-onchain", "initial", "improved")
MIN_TOKEN_LEN = 3
DEFAULT_FUNDING = 100_000

# label -> (framework, client behavior, server behavior) for the improved design;
# initial-framework labels carry the per-server behavior instead.
IMPROVED_CATALOG = {
    "HonestAll": (C_HONEST, S_HONEST),
    "ServerWrongIds": (C_HONEST, S_WRONG_IDS),
    "ServerStaleIndex": (C_HONEST, S_STALE_INDEX),
    "ServerSilent": (C_HONEST, S_SILENT),
    "ServerGarbageCiphertext": (C_HONEST, S_GARBAGE),
    "ClientFalseDispute": (C_FALSE_DISPUTE, S_HONEST),
    "ClientBogusSignedTrapdoor": (C_BOGUS_TRAPDOOR, S_HONEST),
    "ClientWithholdValidation": (C_WITHHOLD, S_HONEST),
}
INITIAL_CATALOG = ("HonestAll", "InitialOneServerWrongCommit", "InitialAllCollude")
ADVERSARY_CATALOG = tuple(IMPROVED_CATALOG) + INITIAL_CATALOG[1:]


# -- corpus ------------------------------------------------------------------------

_TOKEN = re.compile(r"[^\W_]+")


def file_id_for(relpath: str) -> bytes:
    """First 16 bytes of H(path), re-hashed until it avoids the reserved forms."""
    digest = hash_h(relpath.encode("utf-8"))
    while digest[:ID_WIDTH] == SENTINEL or digest[0] == VIRTUAL_TAG:
        digest = hash_h(digest)
    return digest[:ID_WIDTH]


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= MIN_TOKEN_LEN]


def scan_corpus(directory) -> tuple[Database, list[str]]:
    """Build the inverted index of a directory tree; returns (db, skipped files)."""
    root = Path(directory)
    if not root.is_dir():
        raise EmptyCorpusError(f"{root} is not a directory")
    files = sorted(p for p in root.rglob("*") if p.is_file())
    skipped, read = [], 0
    postings: dict[str, list[bytes]] = {}
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError):
            skipped.append(rel)
            continue
        read += 1
        fid = file_id_for(rel)
        for token in dict.fromkeys(tokenize(text)):
            postings.setdefault(token, []).append(fid)
    if read == 0:
        raise EmptyCorpusError(f"no readable text files under {root}")
    if skipped:
        log.warning("skipped %d unreadable file(s) under %s", len(skipped), root)
    return Database({w: postings[w] for w in sorted(postings)}), skipped


def ingest_corpus(directory) -> Database:
    return scan_corpus(directory)[0]


# -- configuration -----------------------------------------------------------------


@dataclass
class ScenarioConfig:
    framework: str
    seed: int
    queries: list[str]
    database: dict[str, list[str]] | None = None  # keyword -> hex file ids
    corpus: str | None = None
    p: int = 4
    lam: int = 256
    n: int = 3
    pricing: PricingConfig = field(default_factory=PricingConfig)
    adversary: str = "HonestAll"
    server_behaviors: list[str] | None = None  # initial only; overrides the adversary label
    reveal_k2: bool = True
    step: int = 10
    rounds: int = 100
    miner_count: int = 10
    proof_backend: str = "sigma"
    funding: int = DEFAULT_FUNDING
    compare_baseline: bool = False
    include_trace: bool = True
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario schema_version {self.schema_version}")
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"framework must be one of {FRAMEWORKS}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("a non-negative integer seed is mandatory")
        if (self.database is None) == (self.corpus is None):
            raise ConfigError("give exactly one of 'database' or 'corpus'")
        if not self.queries or not all(isinstance(q, str) and q for q in self.queries):
            raise ConfigError("queries must be a non-empty list of keywords")
        if self.p < 1:
            raise ConfigError("p must be positive")
        if self.lam not in SUPPORTED_LAMBDAS:
            raise ConfigError(f"lam must be one of {SUPPORTED_LAMBDAS}")
        if self.miner_count < 1 or self.step < 1 or self.rounds < 1 or self.funding < 0:
            raise ConfigError("miner_count, step and rounds must be positive; funding non-negative")
        if self.proof_backend not in ("sigma", "mock"):
            raise ConfigError("proof_backend must be 'sigma' or 'mock'")
        if self.framework == "improved" and self.adversary not in IMPROVED_CATALOG:
            raise ConfigError(f"adversary {self.adversary!r} does not apply to the improved framework")
        if self.framework == "initial":
            if self.n < 2:
                raise ConfigError("the initial framework needs n >= 2")
            if self.server_behaviors is not None:
                if len(self.server_behaviors) != self.n or any(b not in SERVER_BEHAVIORS for b in self.server_behaviors):
                    raise ConfigError(f"server_behaviors needs n entries from {SERVER_BEHAVIORS}")
            elif self.adversary not in INITIAL_CATALOG:
                raise ConfigError(f"adversary {self.adversary!r} does not apply to the initial framework")
        if self.framework == "baseline-onchain" and self.adversary != "HonestAll":
            raise ConfigError("the baseline on-chain design only runs HonestAll")

    @classmethod
    def from_dict(cls, data: dict, *, seed: int | None = None, pricing: dict | None = None) -> "ScenarioConfig":
        data = dict(data)
        if seed is not None:
            data["seed"] = seed
        if pricing is not None:
            data["pricing"] = {**data.get("pricing", {}), **pricing}
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        for required in ("framework", "seed", "queries"):
            if required not in data:
                raise ConfigError(f"scenario is missing {required!r}")
        try:
            data["pricing"] = PricingConfig.from_dict(data.get("pricing", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad pricing: {exc}") from exc
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str, **overrides) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        return cls.from_dict(data, **overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pricing"] = asdict(self.pricing)
        return d

    def load_database(self) -> Database:
        if self.database is not None:
            try:
                return Database.from_json_dict(self.database)
            except ValueError as exc:
                raise ConfigError(f"bad inline database: {exc}") from exc
        return ingest_corpus(self.corpus)

    def initial_behaviors(self) -> list[str]:
        if self.server_behaviors is not None:
            return list(self.server_behaviors)
        if self.adversary == "InitialOneServerWrongCommit":
            return [WRONG] + [HONEST] * (self.n - 1)
        if self.adversary == "InitialAllCollude":
            return [COLLUDE] * self.n
        return [HONEST] * self.n


# -- running -----------------------------------------------------------------------


def _fund(ledger: Ledger, parties, amount: int) -> None:
    for party in parties:
        ledger.mint(party, amount)


def _run_baseline(cfg: ScenarioConfig, db: Database, rng: DeterministicRng) -> tuple[Ledger, dict]:
    ledger = Ledger(cfg.pricing, cfg.miner_count)
    _fund(ledger, ["client"], cfg.funding)
    key, edb = setup(db, lam=cfg.lam, p=cfg.p, rng=rng.fork("baseline-setup"))
    chain = BaselineOnChain(ledger, "client")
    chain.upload(edb)
    sessions = []
    for i, w in enumerate(cfg.queries):
        before = ledger.balance("client")
        ids = chain.search(derive_trapdoor(key, w), cfg.step, cfg.rounds, cfg.reveal_k2)
        sessions.append(
            {
                "session_id": f"baseline-{i}",
                "keyword_index": i,
                "result_count": len(ids),
                "correct": ids == list(db.ids(w)),
                "balance_delta": {"client": ledger.balance("client") - before},
            }
        )
    trapdoors = [derive_trapdoor(key, w) for w in cfg.queries]
    extra = {
        "sessions": sessions,
        "leakage": {
            "ledger_view": leakage_report(ledger_view(ledger), cfg.p),
            "server_view": leakage_report(server_view(edb, trapdoors), cfg.p),
        },
    }
    return ledger, extra


def _run_initial(cfg: ScenarioConfig, db: Database, rng: DeterministicRng) -> tuple[Ledger, dict]:
    ledger = Ledger(cfg.pricing, cfg.miner_count)
    behaviors = cfg.initial_behaviors()
    fw = InitialFramework(
        db, cfg.n, ledger=ledger, lam=cfg.lam, p=cfg.p, rng=rng.fork("initial"), behaviors=dict(enumerate(behaviors))
    )
    _fund(ledger, ["client"] + [r.server_id for r in fw.replicas], cfg.funding)
    parties = ["client", OPERATOR] + [r.server_id for r in fw.replicas]
    sessions = []
    for w in cfg.queries:
        before = {p: ledger.balance(p) for p in parties}
        s = fw.run_query(w)
        truth = sorted(db.ids(w))
        sessions.append(
            {
                "session_id": s.session_id,
                "adversary": cfg.adversary if cfg.server_behaviors is None else "custom",
                "server_behaviors": behaviors,
                "terminal_state": s.phase.name,
                "payments": dict(sorted(s.payments.items())),
                "frozen_escrow": ledger.session_escrow(s.session_id) if s.phase == Phase.DISPUTE_OFFLINE else 0,
                "retrieved": s.retrieved is not None,
                "retrieved_correct": s.retrieved == truth if s.retrieved is not None else None,
                "undetected_cheat": s.phase == Phase.PAID and s.retrieved is not None and s.retrieved != truth,
                "balance_delta": {p: ledger.balance(p) - before[p] for p in sorted(parties)},
            }
        )
    keys = fw.keys
    extra = {
        "sessions": sessions,
        "leakage": {
            "ledger_view": leakage_report(ledger_view(ledger), cfg.p),
            "server_view": leakage_report(
                server_view(fw.replicas[0].edb, [derive_trapdoor(keys[0], w) for w in cfg.queries]), cfg.p
            ),
        },
        "privacy": {
            "scan": scan_ledger(ledger, _sensitive_patterns(db, cfg.queries, [derive_trapdoor(k, w) for k in keys for w in cfg.queries])),
        },
    }
    return ledger, extra


def _sensitive_patterns(db: Database, queries, trapdoors, keyword_keys=(), virtual_ids=()) -> dict[str, list[bytes]]:
    file_ids = sorted({i for _, ids in db.items() for i in ids} | set(virtual_ids))
    return {
        "file_ids": file_ids,
        "keywords": sorted({w.encode("utf-8") for w in list(db.keywords) + list(queries)}),
        "keyword_keys": sorted(keyword_keys),
        "trapdoors": sorted({part for t in trapdoors for part in (t.k1, t.k2)}),
    }


def _run_improved(cfg: ScenarioConfig, db: Database, rng: DeterministicRng) -> tuple[Ledger, dict]:
    ledger = Ledger(cfg.pricing, cfg.miner_count)
    client_b, server_b = IMPROVED_CATALOG[cfg.adversary]
    fw = ImprovedFramework(
        db,
        ledger=ledger,
        lam=cfg.lam,
        p=cfg.p,
        rng=rng.fork("improved"),
        proof_backend=make_backend(cfg.proof_backend),
        client_behavior=client_b,
        server_behavior=server_b,
    )
    _fund(ledger, ["client", "server"], cfg.funding)
    outcomes = [fw.run_query(w, cfg.adversary) for w in cfg.queries]
    sessions = [o.to_dict() for o in outcomes]
    secrets = fw.secrets
    queried = [s.trapdoor for s in fw.contract.sessions.values() if s.trapdoor is not None]
    disputed = [s for s in fw.contract.sessions.values() if s.disputed]
    patterns = _sensitive_patterns(
        db,
        cfg.queries,
        queried,
        keyword_keys=secrets.augmented.keyword_keys.values(),
        virtual_ids=secrets.augmented.virtual_ids.values(),
    )
    exposure = {
        "disputed_sessions": len(disputed),
        "trapdoors_on_ledger": scan_ledger(ledger, {"t": [t.to_bytes() for t in queried]})["t"],
        "index_copies_on_ledger": index_copies(ledger),
    }
    server_trace = server_view(fw.signed.edb, queried)
    extra = {
        "sessions": sessions,
        "leakage": {
            "ledger_view": leakage_report(ledger_view(ledger), cfg.p),
            "server_view": leakage_report(server_trace, cfg.p),
        },
        "privacy": {"scan": scan_ledger(ledger, patterns), "exposure": exposure},
    }
    return ledger, extra


_RUNNERS = {"baseline-onchain": _run_baseline, "initial": _run_initial, "improved": _run_improved}


def run_scenario(cfg: ScenarioConfig) -> dict:
    """Execute one scenario; the returned dict is JSON-ready and fully seed-determined."""
    cfg.validate()
    db = cfg.load_database()
    rng = DeterministicRng(cfg.seed)
    ledger, extra = _RUNNERS[cfg.framework](cfg, db, rng)
    ledger.check_conservation()
    report = {
        "schema_version": SCHEMA_VERSION,
        "framework": cfg.framework,
        "seed": cfg.seed,
        "adversary": cfg.adversary,
        "config": cfg.to_dict(),
        "database": {"keywords": len(db), "postings": sum(len(ids) for _, ids in db.items())},
        **extra,
        "balances": dict(sorted(ledger.balances.items())),
        "conservation": {
            "ok": sum(ledger.balances.values()) + ledger.escrow_total() == ledger.minted,
            "minted": ledger.minted,
            "escrow": ledger.escrow_total(),
            "checks": ledger.conservation_checks,
        },
        "chain_ok": ledger.verify_chain(),
        "cost": ledger.cost_report(),
        "state_digest": ledger.state_digest(),
    }
    if cfg.compare_baseline and cfg.framework != "baseline-onchain":
        base_cfg = ScenarioConfig.from_dict(
            {**cfg.to_dict(), "framework": "baseline-onchain", "adversary": "HonestAll", "server_behaviors": None}
        )
        base_ledger, _ = _run_baseline(base_cfg, db, DeterministicRng(cfg.seed))
        report["baseline_cost"] = base_ledger.cost_report()
    if cfg.include_trace:
        report["trace"] = [json.loads(e.to_json()) for e in ledger.events]
    return report


def dump_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1) + "\n"
