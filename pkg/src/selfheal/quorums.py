"""Quorum graph over a circuit: membership, marking tables, leaders, ELECT."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit
from .engine import Metrics


class QuorumError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Quorum:
    id: int
    members: tuple[int, ...]  # sorted PartyIds
    leader: int
    neighbors: tuple[int, ...] = ()
    # this quorum's marking table, restricted to its own members
    marked: set[int] = field(default_factory=set)

    @property
    def size(self) -> int:
        return len(self.members)

    def unmarked(self) -> list[int]:
        """Unmarked members sorted by PartyId (the canonical subquorum order)."""
        return [p for p in self.members if p not in self.marked]


def sweep_threshold(size: int, gamma: float) -> int:
    """Marked count at which a quorum of ``size`` unmarks everyone."""
    # guard against 0.49 * 100 style float noise landing just above an int
    return math.ceil(round((0.5 - gamma) * size, 9))


def default_quorum_size(n: int) -> int:
    # small networks cannot fill a 4 log n quorum, so every party joins
    return min(n, max(8, math.ceil(4 * math.log2(n))))


class QuorumGraph:
    """One quorum per circuit node, plus the party-to-quorum index.

    Marks are kept per quorum; :meth:`is_marked` reads the table of any
    quorum holding the party, and :meth:`check_consistent` asserts all of
    them agree.
    """

    def __init__(self, circuit: Circuit, quorums: dict[int, Quorum], bad: frozenset[int],
                 n_parties: int, gamma: float = 0.01, metrics: Metrics | None = None):
        self.circuit = circuit
        self.quorums = quorums
        self.bad = bad
        self.n_parties = n_parties
        self.gamma = gamma
        self.metrics = metrics if metrics is not None else Metrics()
        self.party_index: dict[int, set[int]] = {p: set() for p in range(n_parties)}
        for q in quorums.values():
            for p in q.members:
                self.party_index[p].add(q.id)
        self.max_quorum_size = max(q.size for q in quorums.values())
        # membership never changes after construction
        self._member_sets: dict[int, frozenset] = {}
        self._holders: dict[int, frozenset] = {}

    # -- queries -----------------------------------------------------------

    def __getitem__(self, qid: int) -> Quorum:
        return self.quorums[qid]

    def is_bad(self, party: int) -> bool:
        return party in self.bad

    def member_set(self, qid: int) -> frozenset:
        if qid not in self._member_sets:
            self._member_sets[qid] = frozenset(self.quorums[qid].members)
        return self._member_sets[qid]

    def key_holders(self, qid: int) -> frozenset:
        """Parties holding quorum ``qid``'s public key: its members and its neighbours'."""
        if qid not in self._holders:
            q = self.quorums[qid]
            holders = set(q.members)
            for nb in q.neighbors:
                holders.update(self.quorums[nb].members)
            self._holders[qid] = frozenset(holders)
        return self._holders[qid]

    def is_marked(self, party: int) -> bool:
        qids = self.party_index[party]
        if not qids:
            return False
        return party in self.quorums[min(qids)].marked

    def marked_parties(self) -> set[int]:
        return {p for p in range(self.n_parties) if self.is_marked(p)}

    def marked_counts(self) -> tuple[int, int]:
        """(marked bad, marked good)."""
        marked = self.marked_parties()
        b = len(marked & self.bad)
        return b, len(marked) - b

    def all_bad_marked(self) -> bool:
        return all(self.is_marked(p) for p in self.bad)

    def leaders(self) -> dict[int, int]:
        return {qid: q.leader for qid, q in self.quorums.items()}

    def knows_quorums_of(self, x: int, y: int) -> set[int]:
        """All quorums of ``y``, as known to ``x`` (they must share a quorum)."""
        if not self.party_index[x] & self.party_index[y]:
            raise QuorumError("NOT_COLOCATED", f"parties {x} and {y} share no quorum")
        return set(self.party_index[y])

    def bad_fraction(self, qid: int) -> float:
        q = self.quorums[qid]
        return sum(p in self.bad for p in q.members) / q.size

    # -- marking -----------------------------------------------------------

    def _set_mark(self, party: int, value: bool) -> None:
        touched = set()
        for qid in self.party_index[party]:
            if value:
                self.quorums[qid].marked.add(party)
            else:
                self.quorums[qid].marked.discard(party)
            touched.add(qid)
            touched.update(self.quorums[qid].neighbors)
        # each holding quorum tells its neighbours: |Q| * |Q'| per link
        size = self.max_quorum_size
        self.metrics.messages += len(touched) * size

    def mark_parties(self, parties, rng: np.random.Generator, sweep: bool = True) -> list[int]:
        """Mark ``parties`` everywhere, then sweep and re-elect leaders.

        Returns the ids of quorums that were swept, in the order they fired.
        """
        for p in parties:
            self._set_mark(p, True)
        swept = self.sweep_all() if sweep else []
        self.replace_marked_leaders(rng)
        return swept

    def mark_pair(self, a: int, b: int, rng: np.random.Generator) -> list[int]:
        if a == b:
            raise QuorumError("SAME_PARTY", "a conflict pair needs two distinct parties")
        return self.mark_parties((a, b), rng)

    def sweep_all(self) -> list[int]:
        swept = []
        for qid in sorted(self.quorums):
            q = self.quorums[qid]
            if len(q.marked) >= sweep_threshold(q.size, self.gamma):
                self.unmark_sweep(qid)
                swept.append(qid)
        return swept

    def unmark_sweep(self, qid: int) -> None:
        q = self.quorums[qid]
        if len(q.marked) < sweep_threshold(q.size, self.gamma):
            raise QuorumError(
                "BELOW_THRESHOLD",
                f"quorum {qid} has {len(q.marked)} marked, sweep needs "
                f"{sweep_threshold(q.size, self.gamma)}",
            )
        for p in sorted(q.marked):
            self._set_mark(p, False)

    def replace_marked_leaders(self, rng: np.random.Generator) -> list[int]:
        replaced = []
        for qid in sorted(self.quorums):
            q = self.quorums[qid]
            if q.leader in q.marked:
                q.leader = elect(q, rng, self.metrics)
                self.metrics.messages += len(q.neighbors) * q.size
                replaced.append(qid)
        return replaced

    # -- invariants --------------------------------------------------------

    def check_consistent(self) -> None:
        for p, qids in self.party_index.items():
            bits = {p in self.quorums[qid].marked for qid in qids}
            assert len(bits) <= 1, f"marking tables disagree on party {p}"

    def check_invariants(self) -> None:
        """Assert the steady-state guarantees hold in every quorum."""
        self.check_consistent()
        p_max = 0.5 / (1 + 2 * self.gamma)
        for q in self.quorums.values():
            assert q.leader not in q.marked, f"quorum {q.id} has a marked leader"
            assert len(q.marked) < sweep_threshold(q.size, self.gamma), f"quorum {q.id} unswept"
            unmarked = q.unmarked()
            n_bad = sum(p in self.bad for p in unmarked)
            assert (len(unmarked) - n_bad) * 2 >= len(unmarked), f"quorum {q.id} good minority"
            assert n_bad / len(unmarked) <= p_max + 1e-12, f"quorum {q.id} bad unmarked too high"


def elect(q: Quorum, rng: np.random.Generator, metrics: Metrics | None = None) -> int:
    """Uniformly random unmarked member of ``q`` (trusted draw standing in for MPC).

    Charges |Q|**2 messages and |Q| operations.
    """
    unmarked = q.unmarked()
    if not unmarked:
        raise QuorumError("NO_UNMARKED_MEMBERS", f"quorum {q.id} is fully marked")
    if metrics is not None:
        metrics.messages += q.size * q.size
        metrics.operations += q.size
    # sum of |Q| uniform picks mod |U| is uniform; draw it directly
    return unmarked[int(rng.integers(len(unmarked)))]


def choose_bad_roster(n_parties: int, t: int, rng: np.random.Generator) -> frozenset[int]:
    return frozenset(int(p) for p in rng.choice(n_parties, size=t, replace=False))


def build_quorum_graph(
    circuit: Circuit,
    n_parties: int,
    quorum_size: int,
    bad: frozenset[int] | int,
    rng: np.random.Generator | int | None = None,
    epsilon: float = 0.01,
    gamma: float = 0.01,
    metrics: Metrics | None = None,
    max_retries: int = 10_000,
) -> QuorumGraph:
    """Build a quorum per circuit node with at most a quarter bad members.

    ``bad`` is either the bad roster or a count ``t`` of bad parties to draw.
    Members are allocated by balanced random sampling (least loaded parties
    first, random among ties); a quorum breaking the 1/4 bound is resampled.
    """
    rng = np.random.default_rng(rng)
    t = bad if isinstance(bad, int) else len(bad)
    if t > (0.25 - epsilon) * n_parties + 1e-9:
        raise QuorumError(
            "INFEASIBLE_BAD_FRACTION",
            f"t={t} exceeds (1/4 - {epsilon}) * {n_parties} = {(0.25 - epsilon) * n_parties:.3f}",
        )
    if quorum_size < 8 or quorum_size > n_parties:
        raise QuorumError("BAD_QUORUM_SIZE", f"quorum_size must be in [8, {n_parties}]")
    roster = choose_bad_roster(n_parties, t, rng) if isinstance(bad, int) else frozenset(bad)
    bad_mask = np.zeros(n_parties, dtype=bool)
    bad_mask[list(roster)] = True
    limit = quorum_size // 4

    load = np.zeros(n_parties, dtype=np.int64)
    members: dict[int, tuple[int, ...]] = {}
    for node in range(circuit.n_nodes):
        for _ in range(max_retries):
            # random key breaks ties within a load level
            order = np.lexsort((rng.random(n_parties), load))
            pick = order[:quorum_size]
            if bad_mask[pick].sum() <= limit:
                break
            pick = rng.choice(n_parties, size=quorum_size, replace=False)
            if bad_mask[pick].sum() <= limit:
                break
        else:
            raise QuorumError("REJECTION_LIMIT", f"could not fill quorum {node}")
        load[pick] += 1
        members[node] = tuple(sorted(int(p) for p in pick))

    quorums = {}
    for node, mem in members.items():
        neighbors = tuple(sorted(set(circuit.successors[node]) | set(circuit.predecessors(node))))
        leader = mem[int(rng.integers(len(mem)))]
        quorums[node] = Quorum(node, mem, leader, neighbors)
    return QuorumGraph(circuit, quorums, roster, n_parties, gamma, metrics)
