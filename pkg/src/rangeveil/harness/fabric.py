"""Message fabric: envelopes, transcript capture, FIFO delivery.

Transport is in-process and fully deterministic: one global FIFO queue,
strict run-to-completion per message.  Every envelope is recorded in the
transcript with its full payload bytes, which is exactly the observation
surface an honest-but-curious party gets, and what the cost accounting
and linkage analysis read back.
"""

from __future__ import annotations

import enum
import hashlib
import json
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from ..errors import StorageError


class ActorId(enum.Enum):
    DATA_OWNER = "data-owner"
    CLIENT = "client"
    SERVER1 = "server-1"
    SERVER2 = "server-2"


def server_actor(side: int) -> ActorId:
    return ActorId.SERVER1 if side == 1 else ActorId.SERVER2


@dataclass(frozen=True)
class Envelope:
    seq: int
    sender: ActorId
    receiver: ActorId
    epoch: int
    phase: str
    payload: bytes

    @property
    def size(self) -> int:
        return len(self.payload)


class Transcript:
    """Ordered record of every envelope, with per-actor filtered views."""

    def __init__(self, envelopes: Optional[list[Envelope]] = None):
        self.envelopes: list[Envelope] = envelopes or []

    def record(self, env: Envelope) -> None:
        self.envelopes.append(env)

    def view(self, actor: ActorId) -> list[Envelope]:
        """What one party saw: everything it sent or received."""
        return [e for e in self.envelopes if actor in (e.sender, e.receiver)]

    def phase(self, *phases: str) -> list[Envelope]:
        return [e for e in self.envelopes if e.phase in phases]

    def total_bytes(self, *phases: str) -> int:
        selected = self.phase(*phases) if phases else self.envelopes
        return sum(e.size for e in selected)

    def __len__(self) -> int:
        return len(self.envelopes)

    def to_jsonl(self) -> str:
        lines = []
        for e in self.envelopes:
            lines.append(
                json.dumps(
                    {
                        "seq": e.seq,
                        "sender": e.sender.value,
                        "receiver": e.receiver.value,
                        "epoch": e.epoch,
                        "phase": e.phase,
                        "bytes": e.size,
                        "sha256": hashlib.sha256(e.payload).hexdigest(),
                        "payload": e.payload.hex(),
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        envelopes = []
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                payload = bytes.fromhex(obj["payload"])
                if hashlib.sha256(payload).hexdigest() != obj["sha256"]:
                    raise StorageError("transcript line fails its checksum")
                envelopes.append(
                    Envelope(
                        obj["seq"],
                        ActorId(obj["sender"]),
                        ActorId(obj["receiver"]),
                        obj["epoch"],
                        obj["phase"],
                        payload,
                    )
                )
            except (KeyError, ValueError) as exc:
                raise StorageError(f"malformed transcript line: {exc}") from exc
        return cls(envelopes)


class Fabric:
    """FIFO delivery plus transcript recording."""

    def __init__(self):
        self.transcript = Transcript()
        self.queue: deque[Envelope] = deque()
        self._seq = 0

    def send(
        self, sender: ActorId, receiver: ActorId, phase: str, epoch: int, payload: bytes
    ) -> Envelope:
        env = Envelope(self._seq, sender, receiver, epoch, phase, payload)
        self._seq += 1
        self.transcript.record(env)
        self.queue.append(env)
        return env

    def deliver_all(self, handlers: dict[ActorId, Callable[[Envelope], None]]) -> None:
        """Run the scheduler to quiescence."""
        while self.queue:
            env = self.queue.popleft()
            handlers[env.receiver](env)

    @property
    def idle(self) -> bool:
        return not self.queue
