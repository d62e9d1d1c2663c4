"""Quorum-signed broadcast over a simulated threshold signature scheme.

There is no real cryptography here.  A :class:`QuorumSignature` lists the
distinct members whose shares were aggregated, and is valid when at least
``ceil(3|Q|/4)`` of them signed the same payload digest.  Only the sender's
quorum and its neighbours hold the quorum public key, which is modelled by
:func:`verify` refusing other verifiers.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .engine import Metrics


class BroadcastError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def signing_threshold(quorum_size: int) -> int:
    return math.ceil(3 * quorum_size / 4)


def digest(payload: Any) -> str:
    return _digest_text(repr(payload))


@functools.lru_cache(maxsize=1 << 16)
def _digest_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:24]


@dataclass(frozen=True)
class QuorumSignature:
    quorum_id: int
    payload_digest: str
    signers: frozenset
    # party that requested the signature; binds the message to its sender
    sender: int

    @property
    def share_count(self) -> int:
        return len(self.signers)


class Envelope:
    """One simulated point-to-point message.

    ``slot`` names the value carried, usually a circuit node; results
    headed back into an input quorum use ``(input, gate)``.  ``intended``
    is simulator ground truth: the payload an honest sender would have
    produced.  Parties never read it.
    """

    __slots__ = ("kind", "payload", "round", "sender", "receiver", "slot", "signature",
                 "intended", "charged", "key")

    def __init__(self, kind: str, payload, round: int, sender: int, receiver: int,
                 slot: int | tuple = -1, signature: QuorumSignature | None = None, intended=None,
                 charged: bool = False):
        if round < 0:
            raise ValueError("round must be non-negative")
        self.kind = kind
        self.payload = payload
        self.round = round
        self.sender = sender
        self.receiver = receiver
        self.slot = slot
        self.signature = signature
        self.intended = payload if intended is None else intended
        self.charged = charged
        self.key = (kind, round, slot, sender, receiver)

    @property
    def corrupted(self) -> bool:
        return self.payload != self.intended

    def rewrite(self, payload) -> "Envelope":
        return Envelope(self.kind, payload, self.round, self.sender, self.receiver, self.slot,
                        self.signature, self.intended, self.charged)

    def trace_record(self) -> dict:
        return {"round": self.round, "kind": self.kind, "slot": self.slot, "sender": self.sender,
                "receiver": self.receiver, "corrupted": self.corrupted}

    def __repr__(self) -> str:
        return (f"Envelope({self.kind}, {self.payload!r}, r={self.round}, "
                f"{self.sender}->{self.receiver}, slot={self.slot})")


def broadcast(graph, x: int, msg, qid: int, recipients, *, kind: str = "BCAST", round: int = 0,
              slot: int | tuple = -1, metrics: Metrics | None = None,
              member_payloads: Mapping[int, Any] | None = None,
              bad_sign: bool = True,
              accept: Callable[[int, Any], bool] | None = None,
              intended=None) -> list[Envelope]:
    """Have quorum ``qid`` sign ``msg`` for ``x`` and address it to ``recipients``.

    ``member_payloads`` lets a (bad) ``x`` show different members different
    payloads; a good member signs what it was shown if ``accept`` allows it.
    Bad members sign any request when ``bad_sign`` is set and refuse
    otherwise.  Returns the signed envelopes, not yet delivered.  Raises
    ``INSUFFICIENT_SHARES`` when no payload reaches the threshold.
    """
    q = graph.quorums[qid]
    metrics = metrics if metrics is not None else graph.metrics
    shown = {p: (member_payloads[p] if member_payloads is not None else msg) for p in q.members}

    metrics.messages += q.size  # request to every member
    digest_of = {}
    for v in shown.values():
        key = repr(v)
        if key not in digest_of:
            digest_of[key] = (digest(v), v)
    distinct = list(digest_of.values())
    signers: dict[str, set[int]] = {d: set() for d, _ in distinct}
    payload_of: dict[str, Any] = {d: v for d, v in distinct}
    n_shares = 0
    for p, payload in shown.items():
        if graph.is_bad(p):
            if not bad_sign:
                continue
            # a bad member signs every payload it hears about
            for d, _ in distinct:
                signers[d].add(p)
            n_shares += 1
            continue
        if accept is not None and not accept(p, payload):
            continue
        d = digest_of[repr(payload)][0]
        signers[d].add(p)
        n_shares += 1
    metrics.messages += n_shares
    metrics.operations += n_shares

    need = signing_threshold(q.size)
    winners = [d for d, s in signers.items() if len(s) >= need]
    if not winners:
        best = max((len(s) for s in signers.values()), default=0)
        raise BroadcastError("INSUFFICIENT_SHARES", f"quorum {qid}: best payload has {best} < {need} shares")
    # two payloads cannot both pass: they would need > |Q|/4 common (bad) signers beyond the bound
    d = winners[0]
    sig = QuorumSignature(qid, d, frozenset(signers[d]), x)
    payload = payload_of[d]
    return [Envelope(kind, payload, round, x, r, slot, sig, intended) for r in recipients]


def verify(graph, verifier: int, sig: QuorumSignature, payload) -> bool:
    """Check ``sig`` on ``payload`` with the key available to ``verifier``."""
    q = graph.quorums[sig.quorum_id]
    if verifier not in graph.key_holders(sig.quorum_id):
        raise BroadcastError("UNKNOWN_PUBLIC_KEY",
                             f"party {verifier} holds no key for quorum {sig.quorum_id}")
    if sig.payload_digest != digest(payload):
        return False
    if not sig.signers <= graph.member_set(sig.quorum_id):
        return False
    return sig.share_count >= signing_threshold(q.size)
