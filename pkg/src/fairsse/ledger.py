"""Deterministic single-sealer blockchain simulator.

The ledger keeps integer token balances, escrow records, an append-only item
store and a hash-chained event log. Contract logic lives in the framework
modules and calls into the ledger; every mutating call is attributed to a
registered party and re-checks money conservation before returning.

Cost accounting counts stored bytes and contract steps. ``miner_count`` only
scales the cost report; execution is never actually replicated.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

from .crypto.prf import hash_h, prf_f
from .errors import (
    AlreadySettledError,
    GasAssertionError,
    ImmutabilityError,
    InsufficientFundsError,
    InvariantViolation,
    UnauthorizedError,
)
from .sse import EncryptedIndex, IndexRow, Trapdoor, split_ids, strip_padding, unmask

log = logging.getLogger(__name__)

OPERATOR = "contract-operator"
TYPE1 = "type1"
TYPE2 = "type2"


@dataclass(frozen=True)
class PricingConfig:
    search_fee: int = 10
    gas_per_contract_step: int = 1
    dispute_deposit: int = 5
    punishment_amount: int = 20
    deadline_blocks: int = 3
    # contract steps budgeted for one non-disputed search workflow
    workflow_steps: int = 5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"pricing field {name} must be a non-negative integer")
        if self.punishment_amount <= 0:
            raise ValueError("punishment_amount must be positive")
        if self.deadline_blocks < 1:
            raise ValueError("deadline_blocks must be at least 1")

    @property
    def workflow_gas(self) -> int:
        return self.workflow_steps * self.gas_per_contract_step

    @classmethod
    def from_dict(cls, data: dict) -> "PricingConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pricing fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Event:
    height: int
    caller: str
    op: str
    key: str
    amount: int
    digest: str

    def to_json(self) -> str:
        # field order is part of the export format
        return json.dumps(
            {
                "height": self.height,
                "caller": self.caller,
                "op": self.op,
                "key": self.key,
                "amount": self.amount,
                "digest": self.digest,
            }
        )


@dataclass
class EscrowRecord:
    escrow_id: int
    party: str
    amount: int
    purpose: str
    session: str | None


@dataclass(frozen=True)
class Receipt:
    height: int
    op: str
    key: str
    amount: int = 0
    escrow_id: int | None = None


@dataclass(frozen=True)
class StoredItem:
    data: bytes
    height: int
    caller: str


@dataclass(frozen=True)
class SettlementAction:
    """Where the session's escrowed tokens go. Payouts must drain it exactly."""

    kind: str
    payouts: tuple[tuple[str, int], ...]

    @classmethod
    def build(cls, kind: str, payouts: dict[str, int]) -> "SettlementAction":
        merged: dict[str, int] = {}
        for party, amount in payouts.items():
            if amount < 0:
                raise ValueError(f"negative payout to {party}")
            if amount:
                merged[party] = merged.get(party, 0) + amount
        return cls(kind, tuple(sorted(merged.items())))

    @property
    def total(self) -> int:
        return sum(a for _, a in self.payouts)

    def amount_to(self, party: str) -> int:
        return dict(self.payouts).get(party, 0)


def action_type1(
    *, client: str, server: str, search_fee: int, server_deposit: int, client_refund: int = 0, execution_cost: int = 0
) -> SettlementAction:
    """Pay the server its fee and hand back its deposit."""
    return SettlementAction.build(
        TYPE1,
        {server: search_fee + server_deposit, client: client_refund, OPERATOR: execution_cost},
    )


def action_type2(
    *, client: str, server: str, server_deposit: int, execution_cost: int, dispute_share: int, client_refund: int = 0
) -> SettlementAction:
    """Give the client the server's deposit less execution cost and the server's dispute share."""
    if execution_cost + dispute_share > server_deposit:
        raise ValueError("deductions exceed the server deposit")
    return SettlementAction.build(
        TYPE2,
        {
            client: server_deposit - execution_cost - dispute_share + client_refund,
            OPERATOR: execution_cost + dispute_share,
        },
    )


@dataclass
class _Session:
    escrow_ids: list[int] = field(default_factory=list)
    settled: str | None = None


class Ledger:
    def __init__(self, pricing: PricingConfig | None = None, miner_count: int = 1):
        if miner_count < 1:
            raise ValueError("miner_count must be positive")
        self.pricing = pricing or PricingConfig()
        self.miner_count = miner_count
        self.height = 0
        self.block_digests: list[bytes] = [hash_h(b"fairsse-genesis")]
        self.balances: dict[str, int] = {}
        self.escrows: dict[int, EscrowRecord] = {}
        self.items: dict[str, StoredItem] = {}
        self.events: list[Event] = []
        self.minted = 0
        self.contract_steps = 0
        self.conservation_checks = 0
        self._next_escrow = 0
        self._sessions: dict[str, _Session] = {}
        self._deadlines: dict[str, tuple[int, Callable[[], object]]] = {}
        self._pending: list[Event] = []
        self._event_head = self.block_digests[0]
        self.register(OPERATOR)

    # -- identities and money -------------------------------------------------

    def register(self, party: str) -> None:
        if party not in self.balances:
            self.balances[party] = 0

    def _auth(self, caller: str) -> None:
        if caller not in self.balances:
            raise UnauthorizedError(f"{caller!r} is not a registered party")

    def mint(self, party: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("cannot mint a negative amount")
        self.register(party)
        self.balances[party] += amount
        self.minted += amount
        self._log(party, "mint", "", amount)

    def balance(self, party: str) -> int:
        return self.balances.get(party, 0)

    def escrow_total(self, session: str | None = None) -> int:
        return sum(e.amount for e in self.escrows.values() if session is None or e.session == session)

    def deposit(self, party: str, amount: int, purpose: str, session: str | None = None) -> Receipt:
        self._auth(party)
        if amount < 0:
            raise ValueError("deposit must be non-negative")
        if self.balances[party] < amount:
            raise InsufficientFundsError(f"{party} holds {self.balances[party]}, needs {amount}")
        eid = self._next_escrow
        self._next_escrow += 1
        self.balances[party] -= amount
        self.escrows[eid] = EscrowRecord(eid, party, amount, purpose, session)
        if session is not None:
            self._sessions.setdefault(session, _Session()).escrow_ids.append(eid)
        self.contract_steps += 1
        self._log(party, "deposit", f"{purpose}#{eid}", amount)
        return Receipt(self.height, "deposit", purpose, amount, eid)

    def refund_escrow(self, caller: str, escrow_id: int) -> None:
        self._auth(caller)
        rec = self.escrows[escrow_id]
        self.balances[rec.party] += rec.amount
        amount, rec.amount = rec.amount, 0
        self._log(caller, "refund", f"{rec.purpose}#{escrow_id}", amount)

    def consume_gas(self, caller: str, escrow_id: int, steps: int = 1) -> None:
        cost = steps * self.pricing.gas_per_contract_step
        rec = self.escrows[escrow_id]
        if rec.amount < cost:
            raise GasAssertionError(f"escrow {escrow_id} holds {rec.amount}, gas needs {cost}")
        rec.amount -= cost
        self.balances[OPERATOR] += cost
        self.contract_steps += steps
        self._log(caller, "gas", f"{rec.purpose}#{escrow_id}", cost)

    def note(self, caller: str, op: str, key: str = "") -> None:
        """Append an informational event (no state or cost change)."""
        self._log(caller, op, key, 0)

    def charge_steps(self, caller: str, op: str, steps: int = 1, key: str = "") -> None:
        """Meter contract work whose gas is settled from pre-agreed deposits."""
        self.contract_steps += steps
        self._log(caller, op, key, 0)

    # -- sessions and settlement -----------------------------------------------

    def session_escrow(self, session: str) -> int:
        s = self._sessions.get(session)
        return sum(self.escrows[e].amount for e in s.escrow_ids) if s else 0

    def is_settled(self, session: str) -> str | None:
        s = self._sessions.get(session)
        return s.settled if s else None

    def settle(self, caller: str, action: SettlementAction, session: str) -> Receipt:
        self._auth(caller)
        s = self._sessions.get(session)
        if s is None:
            raise KeyError(f"no escrow for session {session!r}")
        if s.settled is not None:
            raise AlreadySettledError(f"session {session!r} already settled as {s.settled}")
        held = self.session_escrow(session)
        if action.total != held:
            raise InvariantViolation(f"settlement pays {action.total} but session escrow holds {held}")
        for eid in s.escrow_ids:
            self.escrows[eid].amount = 0
        for party, amount in action.payouts:
            self.register(party)
            self.balances[party] += amount
        s.settled = action.kind
        self._deadlines.pop(session, None)
        self.contract_steps += 1
        self._log(caller, f"settle_{action.kind}", session, held)
        return Receipt(self.height, "settle", session, held)

    def freeze(self, caller: str, session: str) -> None:
        """Record that a session's escrow stays locked (resolved off-chain)."""
        s = self._sessions.setdefault(session, _Session())
        if s.settled is not None:
            raise AlreadySettledError(f"session {session!r} already settled as {s.settled}")
        s.settled = "frozen"
        self._deadlines.pop(session, None)
        self._log(caller, "freeze", session, self.session_escrow(session))

    # -- storage ------------------------------------------------------------------

    def store_item(self, caller: str, key: str, data: bytes) -> Receipt:
        self._auth(caller)
        if key in self.items:
            raise ImmutabilityError(f"item {key!r} already stored")
        self.items[key] = StoredItem(bytes(data), self.height, caller)
        self.contract_steps += 1
        self._log(caller, "store", key, 0, hash_h(bytes(data)))
        return Receipt(self.height, "store", key)

    def get_item(self, key: str) -> bytes | None:
        item = self.items.get(key)
        return item.data if item else None

    def item_height(self, key: str) -> int | None:
        item = self.items.get(key)
        return item.height if item else None

    @property
    def stored_bytes(self) -> int:
        return sum(len(i.data) for i in self.items.values())

    # -- blocks and deadlines ------------------------------------------------------

    def set_deadline(self, session: str, on_expire: Callable[[], object], blocks: int | None = None) -> int:
        due = self.height + (self.pricing.deadline_blocks if blocks is None else blocks)
        self._deadlines[session] = (due, on_expire)
        return due

    def clear_deadline(self, session: str) -> None:
        self._deadlines.pop(session, None)

    def pending_deadline(self, session: str) -> int | None:
        entry = self._deadlines.get(session)
        return entry[0] if entry else None

    def advance_block(self) -> int:
        body = hash_h(b"".join(bytes.fromhex(e.digest) for e in self._pending))
        self.block_digests.append(hash_h(self.block_digests[-1] + self.height.to_bytes(8, "big") + body))
        self._pending = []
        self.height += 1
        self.expire_deadlines()
        return self.height

    def expire_deadlines(self) -> list[object]:
        fired = []
        for session in sorted(s for s, (due, _) in self._deadlines.items() if due <= self.height):
            _, callback = self._deadlines.pop(session)
            fired.append(callback())
        return fired

    def advance(self, blocks: int) -> int:
        for _ in range(blocks):
            self.advance_block()
        return self.height

    # -- invariants and reporting --------------------------------------------------

    def check_conservation(self) -> None:
        total = sum(self.balances.values()) + self.escrow_total()
        self.conservation_checks += 1
        if total != self.minted:
            raise InvariantViolation(f"conservation broken: holdings {total} != minted {self.minted}")

    def _log(self, caller: str, op: str, key: str, amount: int, payload_digest: bytes = b"") -> None:
        record = f"{self.height}|{caller}|{op}|{key}|{amount}|{payload_digest.hex()}".encode()
        self._event_head = hash_h(self._event_head + record)
        ev = Event(self.height, caller, op, key, amount, self._event_head.hex())
        self.events.append(ev)
        self._pending.append(ev)
        self.check_conservation()

    def export_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def state_digest(self) -> str:
        doc = {
            "height": self.height,
            "chain_head": self.block_digests[-1].hex(),
            "event_head": self._event_head.hex(),
            "balances": sorted(self.balances.items()),
            "escrows": [(e.escrow_id, e.party, e.amount) for e in self.escrows.values()],
            "items": sorted((k, hash_h(v.data).hex(), v.height) for k, v in self.items.items()),
        }
        return hash_h(json.dumps(doc, sort_keys=True).encode()).hex()

    def verify_chain(self) -> bool:
        """Recompute every sealed block digest from the event log."""
        heights = [e.height for e in self.events]
        if heights != sorted(heights):
            return False
        by_height: dict[int, list[Event]] = {}
        for e in self.events:
            by_height.setdefault(e.height, []).append(e)
        digest = self.block_digests[0]
        for h in range(self.height):
            body = hash_h(b"".join(bytes.fromhex(e.digest) for e in by_height.get(h, [])))
            digest = hash_h(digest + h.to_bytes(8, "big") + body)
            if digest != self.block_digests[h + 1]:
                return False
        return True

    def cost_report(self, miner_count: int | None = None) -> dict:
        m = self.miner_count if miner_count is None else miner_count
        return {
            "miner_count": m,
            "storage_bytes": self.stored_bytes,
            "contract_steps": self.contract_steps,
            "replicated_storage_bytes": self.stored_bytes * m,
            "replicated_contract_steps": self.contract_steps * m,
            "single_server_storage_bytes": self.stored_bytes,
            "single_server_contract_steps": self.contract_steps,
        }


# -- the baseline design: the whole index and the search loop live on-chain -----

EDB_PREFIX = "edb/"


@dataclass(frozen=True)
class ContractSearchRound:
    """One contract invocation of the on-chain search loop."""

    blocks: tuple[bytes, ...]  # unmasked id blocks (reveal_k2) or masked payload||nonce
    next_counter: int
    exhausted: bool  # hit Get(label) = missing
    labels: tuple[bytes, ...]


class BaselineOnChain:
    """The index stored row-by-row on the ledger and searched by the contract."""

    def __init__(self, ledger: Ledger, client: str, contract: str = "sse-contract"):
        self.ledger = ledger
        self.client = client
        self.contract = contract
        ledger.register(client)
        ledger.register(contract)
        self.block_size: int | None = None
        self.id_width: int | None = None
        self._queries = 0

    def upload(self, edb: EncryptedIndex, parts: int = 1) -> None:
        """Send the index in ``parts`` chunks; the contract writes one item per row."""
        self.block_size, self.id_width = edb.block_size, edb.id_width
        meta = edb.block_size.to_bytes(4, "big") + edb.id_width.to_bytes(2, "big") + edb.lam.to_bytes(2, "big")
        self.ledger.store_item(self.contract, EDB_PREFIX + "meta", meta)
        chunk = max(1, -(-len(edb.rows) // max(parts, 1)))
        for start in range(0, len(edb.rows), chunk):
            for row in edb.rows[start : start + chunk]:
                self.ledger.store_item(self.contract, EDB_PREFIX + row.label.hex(), row.payload + row.nonce)

    def _get(self, label: bytes) -> IndexRow | None:
        raw = self.ledger.get_item(EDB_PREFIX + label.hex())
        if raw is None:
            return None
        plen = self.block_size * self.id_width
        return IndexRow(label, raw[:plen], raw[plen:])

    def contract_search(
        self, escrow_id: int, st: Trapdoor, step: int, reveal_k2: bool, query: str = "q"
    ) -> ContractSearchRound:
        gas_bound = step * self.ledger.pricing.gas_per_contract_step
        if self.ledger.escrows[escrow_id].amount < gas_bound:
            raise GasAssertionError(f"escrow below gas bound {gas_bound} for step={step}")
        # the search token itself is transaction data, i.e. public
        token = st.k1 + (st.k2 if reveal_k2 else b"") + st.counter.to_bytes(8, "big")
        self.ledger.store_item(self.client, f"baseline/{query}/st/{st.counter}", token)
        blocks, labels = [], []
        c = st.counter
        exhausted = False
        for _ in range(step):
            label = prf_f(st.k1, c.to_bytes(8, "big"))
            labels.append(label)
            self.ledger.consume_gas(self.contract, escrow_id)
            self.ledger.note(self.contract, "contract_get", f"{query}:{label.hex()}")
            row = self._get(label)
            if row is None:
                exhausted = True
                break
            if reveal_k2:
                plain = unmask(row, st.k2)
                self.ledger.store_item(self.contract, f"baseline/{query}/result/{c}", plain)
                blocks.append(plain)
            else:
                blocks.append(row.payload + row.nonce)
            c += 1
        return ContractSearchRound(tuple(blocks), c, exhausted, tuple(labels))

    def search(
        self, trapdoor: Trapdoor, step: int = 10, rounds: int = 100, reveal_k2: bool = True, gas_budget: int | None = None
    ) -> list[bytes]:
        """Client side of the on-chain search: deposit gas, submit tokens, collect ids."""
        query = f"q{self._queries}"
        self._queries += 1
        price = self.ledger.pricing.gas_per_contract_step
        budget = gas_budget if gas_budget is not None else step * price * rounds
        receipt = self.ledger.deposit(self.client, budget, f"baseline-gas/{query}", session=f"baseline/{query}")
        ids: list[bytes] = []
        c = trapdoor.counter
        try:
            for _ in range(rounds):
                st = Trapdoor(trapdoor.k1, trapdoor.k2, c)
                rnd = self.contract_search(receipt.escrow_id, st, step, reveal_k2, query)
                plen = self.block_size * self.id_width
                for blk in rnd.blocks:
                    if reveal_k2:
                        ids.extend(split_ids(blk, self.id_width))
                    else:
                        masked = IndexRow(b"", blk[:plen], blk[plen:])
                        ids.extend(split_ids(unmask(masked, trapdoor.k2), self.id_width))
                c = rnd.next_counter
                if rnd.exhausted:
                    break
        finally:
            self.ledger.refund_escrow(self.contract, receipt.escrow_id)
        return strip_padding(ids)
