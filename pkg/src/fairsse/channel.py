"""Confidential point-to-point channel between the client and its servers.

Nothing sent here is visible to ledger readers; the channel only keeps a
size-level transcript so traces can show who talked to whom and when.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Message:
    seq: int
    sender: str
    receiver: str
    kind: str
    size: int


@dataclass
class PrivateChannel:
    log: list[Message] = field(default_factory=list)

    def send(self, sender: str, receiver: str, kind: str, payload):
        size = len(payload) if isinstance(payload, (bytes, bytearray)) else 0
        self.log.append(Message(len(self.log), sender, receiver, kind, size))
        return payload

    def transcript(self) -> list[dict]:
        return [m.__dict__.copy() for m in self.log]
