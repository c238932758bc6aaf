"""Multi-server framework: n independent indexes, committed result digests.

Each server searches its own copy, commits to ``H(ID_w || r)`` on the ledger,
and opens the commitment once every server has committed. The contract pays
all servers iff every opened digest is equal; otherwise the escrow is frozen
and the dispute is left to be settled off-chain.

Cheating by *all* servers together is not detected; that is a stated
limitation of the design, not a bug.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .channel import PrivateChannel
from .crypto.commitment import Commitment, commit_msg, open_commitment
from .crypto.prf import DEFAULT_LAMBDA, hash_h
from .crypto.rng import as_rng, draw
from .errors import AbortNoDeposit, ConfigError, PhaseError, RetrievalIntegrityError
from .ledger import OPERATOR, Ledger, SettlementAction
from .sse import Database, EncryptedIndex, ID_WIDTH, derive_trapdoor, search, setup, strip_padding

HONEST = "honest"
WRONG = "wrong"  # substitutes one identifier in its answer
COLLUDE = "collude"  # every colluder reports the same fabricated answer
WITHHOLD = "withhold"  # never opens its commitment
REFUSE_DELIVERY = "refuse_delivery"  # paid, then never hands ID_w to the client
SERVER_BEHAVIORS = (HONEST, WRONG, COLLUDE, WITHHOLD, REFUSE_DELIVERY)

CONTRACT = "initial-contract"


class Phase(enum.IntEnum):
    REQUEST = 0
    SEARCH = 1
    VALIDATION = 2
    RETRIEVAL = 3
    PAID = 4
    DISPUTE_OFFLINE = 5


@dataclass
class ServerReplica:
    server_id: str
    edb: EncryptedIndex
    behavior: str = HONEST


@dataclass
class CommitmentRecord:
    commitment: Commitment
    digest: bytes  # kept by the server until opening
    opening_key: bytes
    opened_digest: bytes | None = None
    opened: bool = False


@dataclass
class InitialSession:
    session_id: str
    keyword: str
    r: bytes
    escrow_id: int | None = None
    phase: Phase = Phase.REQUEST
    records: dict[str, CommitmentRecord] = field(default_factory=dict)
    answers: dict[str, list[bytes]] = field(default_factory=dict)  # server-local, never on-chain
    payments: dict[str, int] = field(default_factory=dict)
    retrieved: list[bytes] | None = None

    def advance(self, phase: Phase) -> None:
        if phase < self.phase:
            raise PhaseError(f"cannot move from {self.phase.name} back to {phase.name}")
        self.phase = phase


def canonical_ids(ids) -> bytes:
    """Lex-ordered, padding-free, fixed-width concatenation."""
    return b"".join(sorted(strip_padding(ids)))


def result_digest(encoded_ids: bytes, r: bytes) -> bytes:
    return hash_h(encoded_ids + r)


def setup_multi(db: Database, n: int, *, lam: int = DEFAULT_LAMBDA, p: int = 4, rng=None):
    """Build ``n`` independent indexes; returns (client keys, replicas)."""
    if n < 2:
        raise ConfigError("the multi-server framework needs at least two servers")
    rng = as_rng(rng)
    keys, replicas = [], []
    for i in range(n):
        key, edb = setup(db, lam=lam, p=p, rng=rng.fork(f"replica-{i}"))
        keys.append(key)
        replicas.append(ServerReplica(f"server-{i}", edb))
    return keys, replicas


class InitialFramework:
    def __init__(
        self,
        db: Database,
        n: int,
        *,
        ledger: Ledger | None = None,
        lam: int = DEFAULT_LAMBDA,
        p: int = 4,
        rng=None,
        client: str = "client",
        behaviors: dict[int, str] | None = None,
    ):
        self.rng = as_rng(rng)
        self.lam = lam
        self.keys, self.replicas = setup_multi(db, n, lam=lam, p=p, rng=self.rng.fork("setup"))
        for idx, behavior in (behaviors or {}).items():
            if behavior not in SERVER_BEHAVIORS:
                raise ConfigError(f"unknown server behavior {behavior!r}")
            self.replicas[idx].behavior = behavior
        self.ledger = ledger or Ledger()
        self.client = client
        self.channel = PrivateChannel()
        self.sessions: dict[str, InitialSession] = {}
        for party in [client, CONTRACT, *(r.server_id for r in self.replicas)]:
            self.ledger.register(party)

    @property
    def n(self) -> int:
        return len(self.replicas)

    def required_deposit(self) -> int:
        pr = self.ledger.pricing
        return self.n * pr.search_fee + pr.workflow_gas

    # -- Request ------------------------------------------------------------------

    def request_search(self, w: str) -> InitialSession:
        sid = f"init-{len(self.sessions)}"
        session = InitialSession(sid, w, draw(self.rng, self.lam // 8))
        receipt = self.ledger.deposit(self.client, self.required_deposit(), "initial-search", session=sid)
        session.escrow_id = receipt.escrow_id
        self.sessions[sid] = session
        for i, rep in enumerate(self.replicas):
            self.channel.send(self.client, rep.server_id, "r", session.r)
            self.channel.send(self.client, rep.server_id, "trapdoor", derive_trapdoor(self.keys[i], w).to_bytes())
        session.advance(Phase.SEARCH)
        return session

    # -- Search -----------------------------------------------------------------

    def _answer(self, rep: ServerReplica, honest: list[bytes], session: InitialSession) -> list[bytes]:
        if rep.behavior == WRONG:
            fake = b"\x00" + hash_h(b"wrong|" + rep.server_id.encode() + session.r)[: ID_WIDTH - 1]
            return [fake] + honest[1:]
        if rep.behavior == COLLUDE:
            fake = b"\x00" + hash_h(b"collude|" + session.r)[: ID_WIDTH - 1]
            return [fake] + honest[1:]
        return honest

    def server_commit(self, session: InitialSession, idx: int) -> CommitmentRecord:
        rep = self.replicas[idx]
        if self.ledger.session_escrow(session.session_id) < self.required_deposit():
            raise AbortNoDeposit(f"{rep.server_id}: no sufficient deposit for {session.session_id}")
        self.ledger.note(rep.server_id, "observe_deposit", session.session_id)
        trapdoor = derive_trapdoor(self.keys[idx], session.keyword)
        ids = self._answer(rep, search(rep.edb, trapdoor), session)
        answer = sorted(strip_padding(ids))
        session.answers[rep.server_id] = answer
        digest = result_digest(b"".join(answer), session.r)
        commitment, key = commit_msg(digest, self.rng.fork(f"{session.session_id}/{rep.server_id}"), self.lam)
        self.ledger.store_item(rep.server_id, f"initial/{session.session_id}/commit/{rep.server_id}", commitment.value)
        rec = CommitmentRecord(commitment, digest, key)
        session.records[rep.server_id] = rec
        return rec

    # -- Validation ---------------------------------------------------------------

    def _all_committed(self, session: InitialSession) -> bool:
        return all(
            self.ledger.get_item(f"initial/{session.session_id}/commit/{r.server_id}") is not None
            for r in self.replicas
        )

    def post_openings(self, session: InitialSession) -> None:
        """Each server opens only after seeing every commitment on the ledger."""
        if not self._all_committed(session):
            raise PhaseError("not every server has committed yet")
        session.advance(Phase.VALIDATION)
        for rep in self.replicas:
            if rep.behavior == WITHHOLD:
                continue
            rec = session.records[rep.server_id]
            self.ledger.store_item(
                rep.server_id, f"initial/{session.session_id}/open/{rep.server_id}", rec.opening_key + rec.digest
            )

    def _contract_open(self, session: InitialSession) -> bool:
        """Open every posted commitment and publish the digests; True if all opened."""
        ok = True
        for rep in self.replicas:
            rec = session.records[rep.server_id]
            if rec.opened:
                continue
            raw = self.ledger.get_item(f"initial/{session.session_id}/open/{rep.server_id}")
            if raw is None:
                ok = False
                continue
            key, digest = raw[: self.lam // 8], raw[self.lam // 8 :]
            self.ledger.charge_steps(CONTRACT, "open_commitment", key=rep.server_id)
            if open_commitment(rec.commitment, key, digest):
                rec.opened, rec.opened_digest = True, digest
                self.ledger.store_item(CONTRACT, f"initial/{session.session_id}/digest/{rep.server_id}", digest)
            else:
                ok = False
        return ok

    def validate_and_pay(self, session: InitialSession) -> Phase:
        if session.phase >= Phase.PAID:
            return session.phase
        if not self._contract_open(session):
            # missing openings count as a mismatch once the deadline passes
            if self.ledger.pending_deadline(session.session_id) is None:
                self.ledger.set_deadline(session.session_id, lambda s=session: self._on_deadline(s))
            return session.phase
        digests = {rec.opened_digest for rec in session.records.values()}
        if len(digests) == 1:
            self._pay(session)
        else:
            self._dispute_offline(session)
        return session.phase

    def _on_deadline(self, session: InitialSession) -> Phase:
        self._contract_open(session)
        if all(rec.opened for rec in session.records.values()) and len(
            {rec.opened_digest for rec in session.records.values()}
        ) == 1:
            self._pay(session)
        else:
            self._dispute_offline(session)
        return session.phase

    def _pay(self, session: InitialSession) -> None:
        pr = self.ledger.pricing
        payouts = {rep.server_id: pr.search_fee for rep in self.replicas}
        payouts[OPERATOR] = self.ledger.session_escrow(session.session_id) - self.n * pr.search_fee
        self.ledger.settle(CONTRACT, SettlementAction.build("paid", payouts), session.session_id)
        session.payments = {rep.server_id: pr.search_fee for rep in self.replicas}
        session.advance(Phase.PAID)

    def _dispute_offline(self, session: InitialSession) -> None:
        self.ledger.freeze(CONTRACT, session.session_id)
        session.advance(Phase.DISPUTE_OFFLINE)

    # -- Retrieval ----------------------------------------------------------------

    def deliver(self, session: InitialSession, idx: int) -> list[bytes] | None:
        """What server ``idx`` sends back over the private channel (None = nothing)."""
        rep = self.replicas[idx]
        if rep.behavior == REFUSE_DELIVERY:
            return None
        answer = session.answers[rep.server_id]
        self.channel.send(rep.server_id, self.client, "ID_w", b"".join(answer))
        return list(answer)

    def retrieve_and_check(self, session: InitialSession, idx: int = 0, received: list[bytes] | None = None) -> list[bytes]:
        if session.phase != Phase.PAID:
            raise PhaseError("results are only retrieved after payment")
        if received is None:
            received = self.deliver(session, idx)
        if received is None:
            raise RetrievalIntegrityError(f"{self.replicas[idx].server_id} did not deliver ID_w")
        onchain = self.ledger.get_item(f"initial/{session.session_id}/digest/{self.replicas[idx].server_id}")
        # hash exactly what arrived: ordering is part of the encoding
        if onchain is None or result_digest(b"".join(received), session.r) != onchain:
            raise RetrievalIntegrityError("received ID_w does not match the on-chain digest")
        session.retrieved = list(received)
        return session.retrieved

    # -- whole query --------------------------------------------------------------

    def run_query(self, w: str) -> InitialSession:
        session = self.request_search(w)
        self.ledger.advance_block()
        for i in range(self.n):
            self.server_commit(session, i)
        self.ledger.advance_block()
        self.post_openings(session)
        self.ledger.advance_block()
        self.validate_and_pay(session)
        while session.phase < Phase.PAID:
            self.ledger.advance_block()
        if session.phase == Phase.PAID:
            for i in range(self.n):
                try:
                    self.retrieve_and_check(session, i)
                    break
                except RetrievalIntegrityError:
                    continue
        return session
