"""Single-server framework: signed index and trapdoors, encrypted results
on-chain, and contract-side dispute resolution.

Every keyword gets a virtual identifier ``0xFE || H(K_w || ID_w)[:15]`` planted
next to its real identifiers, which lets the client check a result without
trusting the server. The ledger only ever sees public keys, signatures, the
encrypted result and deposits, unless a dispute forces the server to publish
one trapdoor and its copy of the index.

Dispute steps, first failure decides:

    i    sig_w does not verify over the server's (r, T_w)   -> type-2
    ii   sig_I does not verify over the uploaded index      -> type-2
    iii  the client's decryption proof does not verify      -> type-1
    iv   re-running the search disagrees with the claim     -> type-2, else type-1
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .channel import PrivateChannel
from .crypto.elgamal import DecryptionProof, EncKeyPair, SigmaProofBackend, enc_keygen, pke_decrypt, pke_encrypt
from .crypto.prf import DEFAULT_LAMBDA, hash_h
from .crypto.rng import as_rng, draw
from .crypto.signature import SignKeyPair, check_sig, sig_keygen, sign
from .errors import DecodeError, PhaseError, ProtocolAbort
from .ledger import OPERATOR, TYPE1, TYPE2, Ledger, SettlementAction, action_type1, action_type2
from .sse import (
    ID_WIDTH,
    VIRTUAL_TAG,
    Database,
    EncryptedIndex,
    Trapdoor,
    derive_trapdoor,
    is_virtual_id,
    lookup,
    search,
    setup,
    split_ids,
    strip_padding,
    unmask,
)

CONTRACT = "fair-contract"
KEY_VK = "improved/vk_s"
KEY_PK = "improved/pk_e"
KEY_SIG_I = "improved/sig_I"

STEP_I, STEP_II, STEP_III, STEP_IV = "i", "ii", "iii", "iv"
STEP_DEADLINE = "deadline"

# server behaviors
S_HONEST = "honest"
S_WRONG_IDS = "wrong_ids"
S_STALE_INDEX = "stale_index"
S_SILENT = "silent"
S_GARBAGE = "garbage_ciphertext"
S_LYING_TRAPDOOR = "lying_trapdoor"  # answers a dispute with a different (r, T_w)
# client behaviors
C_HONEST = "honest"
C_FALSE_DISPUTE = "false_dispute"
C_BOGUS_TRAPDOOR = "bogus_signed_trapdoor"
C_WITHHOLD = "withhold_validation"
C_MISSIGNED = "missigned_trapdoor"  # signs a trapdoor other than the one it sends


class State(enum.IntEnum):
    REQUESTED = 0
    TRAPDOOR_ISSUED = 1
    RESULT_POSTED = 2
    VALIDATED = 3
    DISPUTED = 4
    SETTLED_TYPE1 = 5
    SETTLED_TYPE2 = 6
    HALTED = 7


def lex_concat(ids) -> bytes:
    return b"".join(sorted(ids))


def virtual_identifier(k_w: bytes, ids) -> bytes:
    return bytes([VIRTUAL_TAG]) + hash_h(k_w + lex_concat(ids))[: ID_WIDTH - 1]


def encode_result(ids) -> bytes:
    """Canonical plaintext of C_w: virtual id(s) first, then real ids, each lex-ordered."""
    ids = strip_padding(ids)
    return lex_concat(i for i in ids if is_virtual_id(i)) + lex_concat(i for i in ids if not is_virtual_id(i))


def parse_result(plain: bytes) -> tuple[bytes | None, list[bytes]]:
    """Split a result plaintext into (virtual id, real ids); raises DecodeError if malformed."""
    if len(plain) % ID_WIDTH:
        raise DecodeError("result length is not a multiple of the id width")
    ids = split_ids(plain)
    virtual = [i for i in ids if is_virtual_id(i)]
    real = [i for i in ids if not is_virtual_id(i)]
    if len(virtual) != 1 or ids[0] != virtual[0]:
        raise DecodeError("result must start with exactly one virtual identifier")
    return virtual[0], real


def trapdoor_message(r: bytes, trapdoor: Trapdoor) -> bytes:
    return hash_h(r + trapdoor.to_bytes())


@dataclass
class AugmentedDatabase:
    base: Database
    keyword_keys: dict[str, bytes]
    virtual_ids: dict[str, bytes]

    @classmethod
    def build(cls, db: Database, rng, lam: int = DEFAULT_LAMBDA) -> "AugmentedDatabase":
        keys, virtual = {}, {}
        for w, ids in db.items():
            keys[w] = draw(rng, lam // 8)
            virtual[w] = virtual_identifier(keys[w], ids)
        return cls(db, keys, virtual)

    def as_database(self) -> Database:
        return Database({w: [*ids, self.virtual_ids[w]] for w, ids in self.base.items()}, allow_virtual=True)

    def check(self, w: str, ids) -> bool:
        return w in self.keyword_keys and virtual_identifier(self.keyword_keys[w], ids) == self.virtual_ids[w]


@dataclass(frozen=True)
class SignedIndex:
    edb: EncryptedIndex
    signature: bytes

    def verifies(self, vk: bytes) -> bool:
        return check_sig(vk, self.edb.to_bytes(), self.signature)


@dataclass
class ClientSecrets:
    master_key: bytes
    augmented: AugmentedDatabase
    sign_keys: SignKeyPair
    enc_keys: EncKeyPair


def setup_improved(
    db: Database,
    ledger: Ledger,
    client: str = "client",
    *,
    lam: int = DEFAULT_LAMBDA,
    p: int = 4,
    rng=None,
) -> tuple[ClientSecrets, SignedIndex]:
    rng = as_rng(rng)
    aug = AugmentedDatabase.build(db, rng.fork("keyword-keys"), lam)
    key, edb = setup(aug.as_database(), lam=lam, p=p, rng=rng.fork("index"))
    sign_keys = sig_keygen(rng.fork("sign"))
    enc_keys = enc_keygen(rng.fork("enc"))
    signed = SignedIndex(edb, sign(sign_keys.signing_key, edb.to_bytes()))
    ledger.register(client)
    ledger.store_item(client, KEY_VK, sign_keys.verify_key)
    ledger.store_item(client, KEY_PK, enc_keys.public)
    ledger.store_item(client, KEY_SIG_I, signed.signature)
    return ClientSecrets(key, aug, sign_keys, enc_keys), signed


@dataclass
class DisputeBundle:
    claimed: bytes | None  # None: the client says C_w has no plaintext
    proof: DecryptionProof
    r: bytes | None = None
    trapdoor: Trapdoor | None = None
    index_copy: bytes | None = None

    @property
    def server_side_complete(self) -> bool:
        return self.r is not None and self.trapdoor is not None and self.index_copy is not None


def dispute_decision(sig_w_ok: bool, sig_index_ok: bool, proof_ok: bool, search_matches: bool) -> tuple[str, str]:
    """(settlement kind, deciding step) for the outcomes of the four checks."""
    if not sig_w_ok:
        return TYPE2, STEP_I
    if not sig_index_ok:
        return TYPE2, STEP_II
    if not proof_ok:
        return TYPE1, STEP_III
    return (TYPE1 if search_matches else TYPE2), STEP_IV


@dataclass
class SearchSession:
    session_id: str
    client: str
    server: str
    keyword: str | None = None  # client-side only
    r: bytes | None = None
    trapdoor: Trapdoor | None = None
    state: State = State.REQUESTED
    disputed: bool = False
    dispute_step: str | None = None
    settlement: str | None = None
    bundle: DisputeBundle | None = None
    history: list[str] = field(default_factory=list)

    def move(self, state: State) -> None:
        if self.state in (State.SETTLED_TYPE1, State.SETTLED_TYPE2, State.HALTED):
            raise PhaseError(f"session {self.session_id} already terminal ({self.state.name})")
        if state < self.state:
            raise PhaseError(f"cannot move from {self.state.name} to {state.name}")
        self.state = state
        self.history.append(state.name)


class FairSearchContract:
    """Deposit / SearchOK / Dispute functions hosted on the ledger."""

    def __init__(self, ledger: Ledger, proof_backend=None, name: str = CONTRACT):
        self.ledger = ledger
        self.name = name
        self.proofs = proof_backend or SigmaProofBackend()
        self.sessions: dict[str, SearchSession] = {}
        ledger.register(name)

    @property
    def pricing(self):
        return self.ledger.pricing

    def client_deposit(self) -> int:
        pr = self.pricing
        return pr.search_fee + pr.workflow_gas + pr.dispute_deposit

    def server_deposit(self) -> int:
        pr = self.pricing
        return pr.workflow_gas + pr.dispute_deposit + pr.punishment_amount

    def _key(self, sid: str, what: str) -> str:
        return f"improved/{sid}/{what}"

    def _session(self, sid: str) -> SearchSession:
        return self.sessions[sid]

    # -- Request ------------------------------------------------------------------

    def begin_search(self, sid: str, client: str, server: str) -> bool:
        session = SearchSession(sid, client, server)
        self.sessions[sid] = session
        if self.ledger.balance(client) < self.client_deposit() or self.ledger.balance(server) < self.server_deposit():
            self.ledger.note(self.name, "halt", sid)
            session.move(State.HALTED)
            return False
        self.ledger.deposit(client, self.client_deposit(), "client-deposit", session=sid)
        self.ledger.deposit(server, self.server_deposit(), "server-deposit", session=sid)
        self.ledger.note(self.name, "proceed", sid)
        return True

    # -- Search -------------------------------------------------------------------

    def post_sig_w(self, sid: str, caller: str, sig_w: bytes) -> None:
        session = self._session(sid)
        if caller != session.client:
            raise PhaseError("only the session client may post sig_w")
        self.ledger.store_item(caller, self._key(sid, "sig_w"), sig_w)
        session.move(State.TRAPDOOR_ISSUED)
        # no C_w in time: the server is at fault
        self.ledger.set_deadline(sid, lambda: self._settle(session, TYPE2, STEP_DEADLINE))

    def post_result(self, sid: str, caller: str, c_w: bytes) -> None:
        session = self._session(sid)
        if caller != session.server:
            raise PhaseError("only the session server may post C_w")
        if session.state != State.TRAPDOOR_ISSUED:
            raise PhaseError(f"C_w not expected in state {session.state.name}")
        self.ledger.store_item(caller, self._key(sid, "C_w"), c_w)
        session.move(State.RESULT_POSTED)
        # no SearchOK/Dispute in time: treated as acceptance
        self.ledger.set_deadline(sid, lambda: self._settle(session, TYPE1, STEP_DEADLINE))

    # -- Retrieval & Validation -----------------------------------------------------

    def search_ok(self, sid: str, caller: str) -> SettlementAction:
        session = self._session(sid)
        if caller != session.client or session.state != State.RESULT_POSTED:
            raise PhaseError("SearchOK must come from the client after C_w is posted")
        session.move(State.VALIDATED)
        return self._settle(session, TYPE1, None)

    def dispute(self, sid: str, caller: str, claimed: bytes | None, proof: DecryptionProof) -> None:
        session = self._session(sid)
        if caller != session.client or session.state != State.RESULT_POSTED:
            raise PhaseError("Dispute must come from the client after C_w is posted")
        session.disputed = True
        session.bundle = DisputeBundle(claimed, proof)
        marker = b"\x00" if claimed is None else b"\x01" + claimed
        self.ledger.store_item(caller, self._key(sid, "dispute/claim"), marker + proof.transcript)
        session.move(State.DISPUTED)
        # server must answer with (r, T_w) and its index copy
        self.ledger.set_deadline(sid, lambda: self._settle(session, TYPE2, STEP_DEADLINE))

    def server_respond(self, sid: str, caller: str, r: bytes, trapdoor: Trapdoor, index_copy: bytes) -> SettlementAction:
        session = self._session(sid)
        if caller != session.server or session.state != State.DISPUTED:
            raise PhaseError("dispute response must come from the server of a disputed session")
        self.ledger.clear_deadline(sid)
        self.ledger.store_item(caller, self._key(sid, "dispute/r_T"), r + trapdoor.to_bytes())
        self.ledger.store_item(caller, self._key(sid, "dispute/index"), index_copy)
        b = session.bundle
        b.r, b.trapdoor, b.index_copy = r, trapdoor, index_copy
        return self.resolve_dispute(sid)

    def resolve_dispute(self, sid: str) -> SettlementAction:
        session = self._session(sid)
        b = session.bundle
        if b is None or session.state != State.DISPUTED:
            raise PhaseError("no dispute pending")
        if not b.server_side_complete:
            return self._settle(session, TYPE2, STEP_DEADLINE)
        vk = self.ledger.get_item(KEY_VK)
        pk = self.ledger.get_item(KEY_PK)
        charge = lambda op: self.ledger.charge_steps(self.name, op, key=sid)  # noqa: E731

        charge("verify_sig_w")
        sig_w_ok = check_sig(vk, trapdoor_message(b.r, b.trapdoor), self.ledger.get_item(self._key(sid, "sig_w")))
        if not sig_w_ok:
            return self._settle(session, *dispute_decision(False, False, False, False))

        charge("verify_sig_I")
        sig_i_ok = check_sig(vk, b.index_copy, self.ledger.get_item(KEY_SIG_I))
        if not sig_i_ok:
            return self._settle(session, *dispute_decision(True, False, False, False))

        charge("verify_proof")
        c_w = self.ledger.get_item(self._key(sid, "C_w"))
        try:
            proof_ok = self.proofs.verify(pk, c_w, b.claimed, b.proof)
        except DecodeError:
            proof_ok = False
        if not proof_ok:
            return self._settle(session, *dispute_decision(True, True, False, False))

        index = EncryptedIndex.from_bytes(b.index_copy)
        found = lookup(index, b.trapdoor)
        self.ledger.charge_steps(self.name, "contract_search", steps=len(found.labels), key=sid)
        ids = []
        for row in found.rows:
            ids.extend(split_ids(unmask(row, b.trapdoor.k2), index.id_width))
        matches = b.claimed is not None and encode_result(ids) == b.claimed
        return self._settle(session, *dispute_decision(True, True, True, matches))

    # -- settlement ------------------------------------------------------------------

    def _settle(self, session: SearchSession, kind: str, step: str | None) -> SettlementAction:
        pr = self.pricing
        if kind == TYPE1:
            # a lost dispute costs the client its dispute deposit
            refund = 0 if session.disputed else pr.dispute_deposit
            action = action_type1(
                client=session.client,
                server=session.server,
                search_fee=pr.search_fee,
                server_deposit=self.server_deposit(),
                client_refund=refund,
                execution_cost=self.client_deposit() - pr.search_fee - refund,
            )
            final = State.SETTLED_TYPE1
        else:
            action = action_type2(
                client=session.client,
                server=session.server,
                server_deposit=self.server_deposit(),
                execution_cost=pr.workflow_gas,
                dispute_share=pr.dispute_deposit,
                client_refund=self.client_deposit(),
            )
            final = State.SETTLED_TYPE2
        self.ledger.settle(self.name, action, session.session_id)
        session.move(final)
        session.settlement = kind
        session.dispute_step = step
        return action


# -- parties -------------------------------------------------------------------------


class ImprovedClient:
    def __init__(self, name: str, secrets: ClientSecrets, contract: FairSearchContract, channel: PrivateChannel, rng, behavior: str = C_HONEST):
        self.name = name
        self.secrets = secrets
        self.contract = contract
        self.channel = channel
        self.rng = rng
        self.behavior = behavior

    def issue_trapdoor(self, session: SearchSession, w: str) -> tuple[Trapdoor, bytes]:
        if session.state != State.REQUESTED:
            raise PhaseError("trapdoor is issued right after the deposits")
        session.keyword = w
        r = draw(self.rng, len(self.secrets.master_key))
        if self.behavior == C_BOGUS_TRAPDOOR:
            trapdoor = Trapdoor(draw(self.rng, 32), draw(self.rng, 32), 0)
        else:
            trapdoor = derive_trapdoor(self.secrets.master_key, w)
        signed = trapdoor
        if self.behavior == C_MISSIGNED:
            signed = Trapdoor(draw(self.rng, 32), trapdoor.k2, 0)
        sig_w = sign(self.secrets.sign_keys.signing_key, trapdoor_message(r, signed))
        self.contract.post_sig_w(session.session_id, self.name, sig_w)
        session.r, session.trapdoor = r, trapdoor
        self.channel.send(self.name, session.server, "r", r)
        self.channel.send(self.name, session.server, "T_w", trapdoor.to_bytes())
        return trapdoor, r

    def _decrypt(self, c_w: bytes) -> bytes | None:
        try:
            return pke_decrypt(self.secrets.enc_keys.secret, c_w)
        except DecodeError:
            return None

    def check_result(self, w: str, plain: bytes | None) -> bool:
        if plain is None:
            return False
        aug = self.secrets.augmented
        if w not in aug.keyword_keys:
            # no virtual id exists for an absent keyword; only the empty answer is right
            return plain == encode_result([])
        try:
            virtual, real = parse_result(plain)
        except DecodeError:
            return False
        return (
            virtual == virtual_identifier(aug.keyword_keys[w], real)
            and plain == encode_result([virtual, *real])
        )

    def validate(self, session: SearchSession) -> str:
        """Call SearchOK or Dispute; returns which, or "withheld"."""
        if self.behavior == C_WITHHOLD:
            return "withheld"
        c_w = self.contract.ledger.get_item(self.contract._key(session.session_id, "C_w"))
        plain = self._decrypt(c_w)
        ok = self.check_result(session.keyword, plain)
        if self.behavior == C_FALSE_DISPUTE:
            # dispute an honest answer by claiming it lacks one identifier
            fake = plain[:-ID_WIDTH] if plain and len(plain) > ID_WIDTH else b"\x00" * ID_WIDTH
            proof = self.contract.proofs.prove(self.secrets.enc_keys, c_w, fake, self.rng)
            self.contract.dispute(session.session_id, self.name, fake, proof)
            return "dispute"
        if ok:
            self.contract.search_ok(session.session_id, self.name)
            return "search_ok"
        proof = self.contract.proofs.prove(self.secrets.enc_keys, c_w, plain, self.rng)
        self.contract.dispute(session.session_id, self.name, plain, proof)
        return "dispute"


class ImprovedServer:
    def __init__(self, name: str, signed: SignedIndex, contract: FairSearchContract, channel: PrivateChannel, rng, behavior: str = S_HONEST):
        self.name = name
        self.contract = contract
        self.channel = channel
        self.rng = rng
        self.behavior = behavior
        self.signed = signed
        self.held = signed.edb
        self.received: dict[str, tuple[bytes, Trapdoor]] = {}

    def receive(self, session: SearchSession, r: bytes, trapdoor: Trapdoor) -> None:
        self.received[session.session_id] = (r, trapdoor)

    def search(self, session: SearchSession) -> bytes | None:
        """Verify, search, encrypt and post C_w. Returns C_w, or None if silent."""
        sid = session.session_id
        if self.behavior == S_SILENT:
            return None
        r, trapdoor = self.received[sid]
        ledger = self.contract.ledger
        vk = ledger.get_item(KEY_VK)
        if self.behavior != S_STALE_INDEX:
            if not check_sig(vk, trapdoor_message(r, trapdoor), ledger.get_item(self.contract._key(sid, "sig_w"))):
                raise ProtocolAbort(f"{self.name}: sig_w does not match the received trapdoor")
            if not check_sig(vk, self.held.to_bytes(), ledger.get_item(KEY_SIG_I)):
                raise ProtocolAbort(f"{self.name}: held index does not match sig_I")
        if self.behavior == S_STALE_INDEX:
            self.held = stale_copy(self.held, trapdoor)
        if self.behavior == S_GARBAGE:
            c_w = draw(self.rng, 300)
        else:
            ids = search(self.held, trapdoor)
            if self.behavior == S_WRONG_IDS:
                real = [i for i in ids if not is_virtual_id(i)]
                virt = [i for i in ids if is_virtual_id(i)]
                ids = virt + real[1:] if real else virt + [b"\x00" * ID_WIDTH]
            c_w = pke_encrypt(ledger.get_item(KEY_PK), encode_result(ids), self.rng)
        self.contract.post_result(sid, self.name, c_w)
        return c_w

    def respond_to_dispute(self, session: SearchSession) -> SettlementAction:
        r, trapdoor = self.received[session.session_id]
        if self.behavior == S_LYING_TRAPDOOR:
            trapdoor = Trapdoor(trapdoor.k1, trapdoor.k2, trapdoor.counter + 1)
        return self.contract.server_respond(session.session_id, self.name, r, trapdoor, self.held.to_bytes())


def stale_copy(edb: EncryptedIndex, trapdoor: Trapdoor) -> EncryptedIndex:
    """The index minus the last non-padding block reachable from ``trapdoor``.

    Models an out-of-date copy. The dropped block holds the virtual identifier
    (it is appended after the real ids), so the loss is always visible to the query.
    """
    hit = [r for r in lookup(edb, trapdoor).rows if strip_padding(split_ids(unmask(r, trapdoor.k2), edb.id_width))]
    if not hit:
        return edb
    dropped = hit[-1].label
    return EncryptedIndex(tuple(r for r in edb.rows if r.label != dropped), edb.block_size, edb.lam, edb.id_width)


@dataclass
class SessionOutcome:
    session_id: str
    adversary: str
    terminal_state: str
    settlement: str | None
    dispute_step: str | None
    balance_delta: dict[str, int]
    validation: str | None = None
    aborted: str | None = None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "adversary": self.adversary,
            "terminal_state": self.terminal_state,
            "settlement": self.settlement,
            "dispute_step": self.dispute_step,
            "balance_delta": dict(sorted(self.balance_delta.items())),
            "validation": self.validation,
            "aborted": self.aborted,
        }


class ImprovedFramework:
    """Wires client, server and contract together on one ledger."""

    def __init__(
        self,
        db: Database,
        *,
        ledger: Ledger | None = None,
        lam: int = DEFAULT_LAMBDA,
        p: int = 4,
        rng=None,
        proof_backend=None,
        client: str = "client",
        server: str = "server",
        client_behavior: str = C_HONEST,
        server_behavior: str = S_HONEST,
    ):
        self.rng = as_rng(rng)
        self.ledger = ledger or Ledger()
        self.channel = PrivateChannel()
        self.contract = FairSearchContract(self.ledger, proof_backend)
        self.ledger.register(client)
        self.ledger.register(server)
        self.secrets, self.signed = setup_improved(db, self.ledger, client, lam=lam, p=p, rng=self.rng.fork("setup"))
        if hasattr(self.contract.proofs, "register"):
            self.contract.proofs.register(self.secrets.enc_keys)
        self.channel.send(client, server, "index", self.signed.edb.to_bytes())
        self.client = ImprovedClient(client, self.secrets, self.contract, self.channel, self.rng.fork("client"), client_behavior)
        self.server = ImprovedServer(server, self.signed, self.contract, self.channel, self.rng.fork("server"), server_behavior)
        self._count = 0

    def run_query(self, w: str, adversary: str = "HonestAll") -> SessionOutcome:
        ledger = self.ledger
        sid = f"impr-{self._count}"
        self._count += 1
        parties = [self.client.name, self.server.name, OPERATOR]
        before = {p: ledger.balance(p) for p in parties}
        outcome = SessionOutcome(sid, adversary, "", None, None, {})
        if not self.contract.begin_search(sid, self.client.name, self.server.name):
            session = self.contract.sessions[sid]
        else:
            session = self.contract.sessions[sid]
            ledger.advance_block()
            trapdoor, r = self.client.issue_trapdoor(session, w)
            self.server.receive(session, r, trapdoor)
            ledger.advance_block()
            try:
                self.server.search(session)
            except ProtocolAbort as exc:
                outcome.aborted = str(exc)
            ledger.advance_block()
            if session.state == State.RESULT_POSTED:
                outcome.validation = self.client.validate(session)
                ledger.advance_block()
                if session.state == State.DISPUTED and self.server.behavior != S_SILENT:
                    self.server.respond_to_dispute(session)
            while session.state not in (State.SETTLED_TYPE1, State.SETTLED_TYPE2):
                ledger.advance_block()
        outcome.terminal_state = session.state.name
        outcome.settlement = session.settlement
        outcome.dispute_step = session.dispute_step
        outcome.balance_delta = {p: ledger.balance(p) - before[p] for p in parties}
        return outcome
