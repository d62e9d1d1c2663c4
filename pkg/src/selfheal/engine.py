"""Round-based scheduler with rushing bad parties, plus global cost counters."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable

import numpy as np

if TYPE_CHECKING:
    from .broadcast import Envelope


@dataclass
class Metrics:
    messages: int = 0
    operations: int = 0
    latency_rounds: int = 0
    corrupted_outputs: int = 0
    compute_calls: int = 0
    update_calls: int = 0
    check_calls: int = 0
    checks_detected: int = 0
    marked_good: int = 0
    marked_bad: int = 0

    def snapshot(self) -> dict:
        return asdict(self)

    def delta(self, before: dict) -> dict:
        now = asdict(self)
        return {k: now[k] - before[k] for k in now}


def component_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one simulation component.

    Streams are keyed by ``label`` so adding draws in one component never
    shifts another.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),)))


@dataclass
class RoundSchedule:
    h: int = 1
    current_round: int = 0
    # envelopes queued for sending in the current round
    outbox: list = field(default_factory=list)
    delivered: int = 0
    suppressed: int = 0
    trace: Callable[[dict], None] | None = None

    def send(self, env: "Envelope") -> None:
        self.outbox.append(env)

    def send_all(self, envs: Iterable["Envelope"]) -> None:
        self.outbox.extend(envs)


def step_round(sched: RoundSchedule, is_bad: Callable[[int], bool], adversary, metrics: Metrics,
               context=None) -> list:
    """Run one synchronous round and return the envelopes delivered.

    Good senders' envelopes are fixed first.  The adversary then sees all of
    them (rushing) together with what the bad parties were supposed to send,
    and decides what the bad parties actually send.  Everything sent this
    round arrives at the start of the next, within the delay bound ``h``.
    """
    outgoing, sched.outbox = sched.outbox, []
    good = [e for e in outgoing if not is_bad(e.sender)]
    bad_intended = [e for e in outgoing if is_bad(e.sender)]
    if adversary is not None and bad_intended:
        bad_actual = adversary.act(bad_intended, good, context)
    else:
        bad_actual = bad_intended
    sched.suppressed += len(bad_intended) - len(bad_actual)

    sent_round = sched.current_round
    sched.current_round += 1
    delivered = good + list(bad_actual)
    # every envelope lands next round, so the good-to-good bound holds when h >= 1
    assert sched.current_round - sent_round <= sched.h, "good-to-good delay bound broken"
    fresh = 0
    for env in delivered:
        if not env.charged:
            fresh += 1
            env.charged = True
    metrics.messages += fresh
    if sched.trace is not None:
        for env in delivered:
            sched.trace(env.trace_record())
    sched.delivered += len(delivered)
    metrics.latency_rounds += 1
    return delivered


def record_corruption_if_any(final_outputs: dict[int, int | None], ideal: int, good_parties,
                             metrics: Metrics) -> bool:
    """Count a corrupted COMPUTE if some good party lacks the ideal value."""
    corrupted = any(final_outputs.get(p) != ideal for p in good_parties)
    if corrupted:
        metrics.corrupted_outputs += 1
    return corrupted


class JsonlTrace:
    """Line-delimited JSON sink for envelope traces."""

    def __init__(self, path):
        self._fh = open(path, "w")

    def __call__(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()
