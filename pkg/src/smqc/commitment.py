"""Digest-based bit commitment and the commit-then-open bit exchange.

``commit`` binds a bit with a 128-bit nonce: ``SHA-256(bit_byte || nonce)``.
``swap_protocol`` exchanges one bit in each direction so that neither side
sees the other's bit before its own is fixed: both commitments go over the
wire before either opening.

Wire encoding of a message::

    tag (1 byte: 0x01 commit, 0x02 open) || sender id (2 bytes, big endian) || payload

where the payload is the 32-byte digest or the 17-byte opening.
"""
from __future__ import annotations

import hashlib
import hmac
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

DIGEST = "sha256"
NONCE_BYTES = 16


class MessageKind(IntEnum):
    COMMIT = 0x01
    OPEN = 0x02


@dataclass(frozen=True)
class CommitmentToken:
    digest: bytes

    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class Opening:
    bit: int
    nonce: bytes

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        if len(self.nonce) != NONCE_BYTES:
            raise ValueError(f"nonce must be {NONCE_BYTES} bytes")

    def to_bytes(self) -> bytes:
        return bytes([self.bit]) + self.nonce

    @classmethod
    def from_bytes(cls, data: bytes) -> "Opening":
        if len(data) != 1 + NONCE_BYTES:
            raise ValueError("malformed opening")
        return cls(data[0], bytes(data[1:]))


def commit(bit: int, nonce: bytes) -> CommitmentToken:
    op = Opening(bit, nonce)
    return CommitmentToken(hashlib.new(DIGEST, op.to_bytes()).digest())


def open_verify(token: CommitmentToken, opening: Opening) -> bool:
    return hmac.compare_digest(commit(opening.bit, opening.nonce).digest, token.digest)


def fresh_nonce(rng: np.random.Generator) -> bytes:
    return rng.bytes(NONCE_BYTES)


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    payload: bytes

    def encode(self) -> bytes:
        return bytes([self.kind]) + self.sender.to_bytes(2, "big") + self.payload

    @classmethod
    def decode(cls, data: bytes, receiver: int) -> "Message":
        return cls(MessageKind(data[0]), int.from_bytes(data[1:3], "big"), receiver, bytes(data[3:]))


class Channel:
    """Reliable FIFO wire; ``log`` keeps every message in delivery order."""

    def __init__(self):
        self._queue: deque[Message] = deque()
        self.log: list[Message] = []

    def send(self, msg: Message):
        self._queue.append(msg)

    def pending(self) -> bool:
        return bool(self._queue)

    def deliver(self) -> Message:
        msg = self._queue.popleft()
        self.log.append(msg)
        return msg


class SwapError(Exception):
    pass


class CheatDetected(SwapError):
    def __init__(self, culprit: int):
        super().__init__(f"party {culprit} opened a value that does not match its commitment")
        self.culprit = culprit


class ProtocolViolation(SwapError):
    def __init__(self, culprit: int, detail: str):
        super().__init__(f"party {culprit}: {detail}")
        self.culprit = culprit


class Abort(SwapError):
    """A party stopped after learning the other bit.  Detected, not prevented."""

    def __init__(self, culprit: int, victim_bit_leaked: int):
        super().__init__(f"party {culprit} aborted after receiving the counterpart's opening")
        self.culprit = culprit
        self.leaked_bit = victim_bit_leaked


class SwapParty:
    """Honest participant: commit, wait for the peer's commitment, then open."""

    def __init__(self, pid: int, peer: int, bit: int, rng: np.random.Generator):
        self.pid = pid
        self.peer = peer
        self.bit = bit
        self.opening = Opening(bit, fresh_nonce(rng))
        self.token = commit(bit, self.opening.nonce)
        self.sent_commit = False
        self.sent_open = False
        self.peer_token: CommitmentToken | None = None
        self.received_bit: int | None = None

    def _msg(self, kind: MessageKind, payload: bytes) -> Message:
        return Message(kind, self.pid, self.peer, payload)

    def poll(self) -> list[Message]:
        out = []
        if not self.sent_commit:
            self.sent_commit = True
            out.append(self._msg(MessageKind.COMMIT, self.token.digest))
        if self.peer_token is not None and not self.sent_open:
            self.sent_open = True
            out.append(self._msg(MessageKind.OPEN, self.opening.to_bytes()))
        return out

    def receive(self, msg: Message):
        if msg.kind is MessageKind.COMMIT:
            if self.peer_token is not None:
                raise ProtocolViolation(msg.sender, "sent a second commitment")
            self.peer_token = CommitmentToken(msg.payload)
        else:
            if self.peer_token is None:
                raise ProtocolViolation(msg.sender, "opened before committing")
            opening = Opening.from_bytes(msg.payload)
            if not open_verify(self.peer_token, opening):
                raise CheatDetected(msg.sender)
            self.received_bit = opening.bit

    @property
    def done(self) -> bool:
        return self.sent_open and self.received_bit is not None


class EagerOpener(SwapParty):
    """Scripted misbehaviour: opens right after committing, without waiting."""

    def poll(self):
        out = []
        if not self.sent_commit:
            self.sent_commit = True
            out.append(self._msg(MessageKind.COMMIT, self.token.digest))
        if not self.sent_open:
            self.sent_open = True
            out.append(self._msg(MessageKind.OPEN, self.opening.to_bytes()))
        return out


class Equivocator(SwapParty):
    """Commits to ``bit`` but opens the complement with the same nonce."""

    def poll(self):
        out = super().poll()
        return [
            self._msg(MessageKind.OPEN, Opening(1 - self.bit, self.opening.nonce).to_bytes())
            if m.kind is MessageKind.OPEN
            else m
            for m in out
        ]


class Aborter(SwapParty):
    """Withholds its opening until it has seen the peer's, then walks away."""

    def poll(self):
        out = []
        if not self.sent_commit:
            self.sent_commit = True
            out.append(self._msg(MessageKind.COMMIT, self.token.digest))
        return out


@dataclass
class SwapTranscript:
    messages: list[Message] = field(default_factory=list)

    def kinds(self) -> list[tuple[MessageKind, int]]:
        return [(m.kind, m.sender) for m in self.messages]

    def ordering_ok(self) -> bool:
        commits = [i for i, m in enumerate(self.messages) if m.kind is MessageKind.COMMIT]
        opens = [i for i, m in enumerate(self.messages) if m.kind is MessageKind.OPEN]
        return len(commits) == 2 and (not opens or max(commits) < min(opens))


@dataclass(frozen=True)
class SwapResult:
    bit_at_b: int  # a, as received by B
    bit_at_a: int  # b, as received by A
    transcript: SwapTranscript


def swap_protocol(
    a: int,
    b: int,
    rng: np.random.Generator,
    *,
    channel: Channel | None = None,
    parties: tuple[int, int] = (0, 1),
    a_cls: type[SwapParty] = SwapParty,
    b_cls: type[SwapParty] = SwapParty,
) -> SwapResult:
    """Exchange ``a`` (held by ``parties[0]``) and ``b`` (held by ``parties[1]``).

    Parties are polled round-robin, A first; every queued message is
    delivered in FIFO order before the next poll.  The scheduler raises
    ``ProtocolViolation`` as soon as an opening is delivered while a
    commitment is still outstanding.
    """
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError("SWAP exchanges single bits")
    channel = channel or Channel()
    pa, pb = parties
    alice = a_cls(pa, pb, a, rng)
    bob = b_cls(pb, pa, b, rng)
    by_id = {pa: alice, pb: bob}
    transcript = SwapTranscript()
    commits_seen: set[int] = set()

    while True:
        progressed = False
        for party in (alice, bob):
            for msg in party.poll():
                channel.send(msg)
                progressed = True
        while channel.pending():
            msg = channel.deliver()
            transcript.messages.append(msg)
            if msg.kind is MessageKind.COMMIT:
                commits_seen.add(msg.sender)
            elif commits_seen != {pa, pb}:
                raise ProtocolViolation(msg.sender, "opening sent before both commitments were exchanged")
            by_id[msg.receiver].receive(msg)
        if alice.done and bob.done:
            break
        if not progressed:
            for party, other in ((alice, bob), (bob, alice)):
                if party.received_bit is not None and not party.sent_open:
                    raise Abort(party.pid, party.received_bit)
            raise ProtocolViolation(pa, "exchange stalled")
    return SwapResult(bob.received_bit, alice.received_bit, transcript)
