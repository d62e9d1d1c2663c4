"""COMPUTE, CHECK and UPDATE on top of the quorum graph.

COMPUTE-CIRCUIT is simulated envelope by envelope through the round
scheduler.  CHECK runs at subquorum granularity: every round appends one
fresh party per node to each of the three subquorum families, but the
i-fold relay traffic between subquorums is charged in closed form rather
than materialized; only deviations by bad checkers are written to the
transcript log, since honest relays can never put two parties in conflict.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .broadcast import BroadcastError, Envelope, broadcast, verify
from .circuit import Circuit, evaluate_all, iterated_log
from .engine import Metrics, RoundSchedule, component_rng, record_corruption_if_any, step_round
from .quorums import QuorumGraph, elect

# latency charged for the request/share exchange inside one BROADCAST
BROADCAST_ROUNDS = 2


@dataclass(frozen=True)
class ConflictPair:
    a: int
    b: int
    evidence: tuple

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("a conflict pair needs two distinct parties")

    @property
    def parties(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Evidence:
    """What an UPDATE initiator shows its quorum.

    ``kind`` is ``"inconsistent"`` (two received messages about the same
    value that disagree) or ``"missing"`` (a message the schedule says it
    should have received).
    """

    kind: str
    keys: tuple
    claimed: tuple = ()


@dataclass
class Publication:
    sent: dict
    received: dict  # key -> (payload, signature)


@dataclass
class UpdateOutcome:
    status: str  # "MARKED" or "BOGUS_CLAIM"
    initiator: int
    pairs: list = field(default_factory=list)
    convicted: list = field(default_factory=list)
    swept: list = field(default_factory=list)
    potential_before: float = 0.0
    potential_after: float = 0.0


@dataclass
class CheckOutcome:
    detected: bool
    rounds: int
    initiator: int | None = None
    evidence: Evidence | None = None
    dag_sizes: list = field(default_factory=list)


@dataclass
class ComputeResult:
    outputs: dict
    ideal: int
    corrupted: bool
    triggered: bool
    check: CheckOutcome | None = None
    update: UpdateOutcome | None = None
    metrics: dict = field(default_factory=dict)


class TranscriptLog:
    """Every envelope of the current COMPUTE, keyed by (kind, round, slot, sender, receiver).

    ``scheduled`` holds what each sender was supposed to send given what it
    actually received; ``actual`` holds what arrived.
    """

    def __init__(self):
        self.scheduled: dict[tuple, object] = {}
        self.actual: dict[tuple, Envelope] = {}
        self._index = None

    def clear(self) -> None:
        self.__init__()

    def schedule(self, env: Envelope) -> None:
        self.scheduled[env.key] = env.intended

    def deliver(self, env: Envelope) -> None:
        self.actual[env.key] = env
        self._index = None

    def _by_party(self):
        if self._index is None:
            sent, received = defaultdict(list), defaultdict(list)
            for env in self.actual.values():
                sent[env.sender].append(env)
                received[env.receiver].append(env)
            self._index = (sent, received)
        return self._index

    def sent_by(self, party: int) -> list[Envelope]:
        return list(self._by_party()[0].get(party, ()))

    def received_by(self, party: int) -> list[Envelope]:
        return list(self._by_party()[1].get(party, ()))

    def participants(self) -> set[int]:
        sent, received = self._by_party()
        return set(sent) | set(received)


def potential(b: int, g: int, gamma: float) -> float:
    """b - p/(1-p) * g with p = (1/2)/(1+2 gamma)."""
    p = 0.5 / (1 + 2 * gamma)
    return b - p / (1 - p) * g


def potential_step(gamma: float) -> float:
    p = 0.5 / (1 + 2 * gamma)
    return (1 - 2 * p) / (1 - p)


def majority(values):
    """Value sent by more than half of ``values``, else None."""
    if not values:
        return None
    value, count = Counter(values).most_common(1)[0]
    return value if 2 * count > len(values) else None


def max_rooted_subgraph(nodes, preds) -> tuple[frozenset, int | None]:
    """Largest set S within ``nodes`` whose members all reach one root inside S.

    ``preds(v)`` lists the in-neighbours of ``v``.  Ties go to the smallest
    root id.  Returns (node set, root).
    """
    nodes = set(nodes)
    best: frozenset = frozenset()
    best_root = None
    for root in sorted(nodes):
        seen = {root}
        stack = [root]
        while stack:
            v = stack.pop()
            for u in preds(v):
                if u in nodes and u not in seen:
                    seen.add(u)
                    stack.append(u)
        if len(seen) > len(best):
            best, best_root = frozenset(seen), root
    return best, best_root


class Simulation:
    """One protocol instance: circuit, quorum graph, adversary and counters."""

    def __init__(self, circuit: Circuit, graph: QuorumGraph, adversary=None, seed: int = 0,
                 h: int = 1, trace=None):
        from .adversary import Passive

        self.circuit = circuit
        self.graph = graph
        self.adversary = adversary if adversary is not None else Passive()
        self.metrics: Metrics = graph.metrics
        self.h = h
        self.trace = trace
        self.seed = seed
        self.rng_elect = component_rng(seed, "elect")
        self.rng_trigger = component_rng(seed, "trigger")
        self.rng_check = component_rng(seed, "check")
        self.rng_adversary = component_rng(seed, "adversary")
        self.log = TranscriptLog()
        self.update_history: list[UpdateOutcome] = []
        self.output_node = circuit.output_gate
        self.n = circuit.n_inputs
        self.check_rounds = 16 * iterated_log(circuit.n_nodes)
        self._dist_to_output = self._longest_to_output()
        self._reset_compute_state()

    # -- helpers -----------------------------------------------------------

    def is_bad(self, party: int) -> bool:
        return party in self.graph.bad

    def good_parties(self) -> list[int]:
        return [p for p in range(self.graph.n_parties) if p not in self.graph.bad]

    def leader(self, node: int) -> int:
        return self.graph.quorums[node].leader

    def _longest_to_output(self) -> dict[int, int]:
        dist = {self.circuit.output_gate: 0}
        for v in reversed(self.circuit.topo_order):
            if v == self.circuit.output_gate:
                continue
            succ = self.circuit.successors[v]
            dist[v] = 1 + max(dist[s] for s in succ)
        return dist

    def _reset_compute_state(self) -> None:
        self.log.clear()
        self.flags: list[tuple[int, Evidence]] = []
        self.output_view: dict[int, tuple] = {}  # Q_out member -> (value, key)
        self.result_keys: dict[int, tuple] = {}  # sender -> key of one relay carrying its result
        self.results: dict[int, int | None] = {}
        self.inputs: list[int] = []
        self.ideal_values: dict[int, int] = {}
        self.leader_out: dict[int, int] = {}
        self.sched = RoundSchedule(h=self.h, trace=self.trace)

    def _flag(self, party: int, evidence: Evidence) -> None:
        if not self.is_bad(party):
            self.flags.append((party, evidence))

    def _queue(self, envs) -> None:
        scheduled = self.log.scheduled
        for env in envs:
            scheduled[env.key] = env.intended
        self.sched.outbox.extend(envs)

    def _step(self) -> list[Envelope]:
        delivered = step_round(self.sched, self.graph.bad.__contains__, self.adversary,
                               self.metrics, self)
        actual = self.log.actual
        for env in delivered:
            actual[env.key] = env
        self.log._index = None
        return delivered

    def _broadcast(self, x: int, payload, qid: int, recipients, kind: str, slot,
                   round_index: int = 0) -> list[Envelope]:
        """BROADCAST with the adversary choosing what a bad ``x`` asks to sign."""
        member_payloads = None
        intended = payload
        if self.is_bad(x):
            choice = self.adversary.tamper_broadcast(kind, slot, x, payload, self)
            if choice is None:
                # a refused broadcast is still scheduled: receivers expect it
                for r in recipients:
                    self.log.schedule(Envelope(kind, payload, round_index, x, r, slot))
                return []
            if isinstance(choice, dict):
                member_payloads = choice
            else:
                payload = choice
        try:
            envs = broadcast(self.graph, x, payload, qid, recipients, kind=kind, round=round_index,
                             slot=slot, metrics=self.metrics, member_payloads=member_payloads,
                             intended=intended)
        except BroadcastError:
            for r in recipients:
                self.log.schedule(Envelope(kind, intended, round_index, x, r, slot))
            return []
        return envs

    # -- COMPUTE -----------------------------------------------------------

    def compute(self, inputs, force_check: bool | None = None) -> ComputeResult:
        """COMPUTE-CIRCUIT, then TRIGGER-CHECK, then CHECK and UPDATE if needed."""
        before = self.metrics.snapshot()
        self.metrics.compute_calls += 1
        outputs = self.compute_circuit(inputs)
        ideal = self.ideal_values[self.output_node]
        corrupted = record_corruption_if_any(outputs, ideal, self.good_parties(), self.metrics)
        triggered, _ = self.trigger_check()
        if force_check is not None:
            triggered = force_check
        check = update = None
        if triggered:
            check = self.check()
            if check.detected:
                update = self.update(check.initiator, check.evidence)
        return ComputeResult(outputs, ideal, corrupted, triggered, check, update,
                             self.metrics.delta(before))

    def compute_circuit(self, inputs) -> dict[int, int | None]:
        """Run the leader circuit and return each sender's delivered result."""
        c, g = self.circuit, self.graph
        self._reset_compute_state()
        self.inputs = [int(x) % c.modulus for x in inputs]
        self.ideal_values = evaluate_all(c, self.inputs)
        self.adversary.begin_compute(self)
        n, q = self.n, c.modulus

        # phase 1: inputs into input quorums, then relayed to gate leaders
        for i in range(n):
            members = g.quorums[i].members
            self._queue(self._broadcast(i, self.inputs[i], i, members, "INPUT", i))
        self.metrics.latency_rounds += BROADCAST_ROUNDS
        member_input: dict[tuple[int, int], int] = {}
        for env in self._step():
            if verify(g, env.receiver, env.signature, env.payload):
                self.metrics.operations += 1
                member_input[(env.slot, env.receiver)] = env.payload
        for i in range(n):
            for p in g.quorums[i].unmarked():
                if (i, p) not in member_input:
                    continue
                for k in c.successors[i]:
                    self._queue([Envelope("RELAY_IN", member_input[(i, p)], 0, p, self.leader(k), i)])
        relays = defaultdict(list)  # (gate, input node) -> [(sender, payload)]
        for env in self._step():
            for k in c.successors[env.slot]:
                if self.leader(k) == env.receiver:
                    relays[(k, env.slot)].append(env)

        # phase 2: gates level by level
        gate_in: dict[tuple[int, int], int] = {}
        for (k, i), envs in relays.items():
            unmarked = set(g.quorums[i].unmarked())
            vals = [e.payload for e in envs if e.sender in unmarked]
            self.metrics.operations += len(vals)
            value = majority(vals)
            if len(set(vals)) > 1:
                odd = next(e for e in envs if e.payload != value)
                same = next((e for e in envs if e.payload == value), envs[0])
                self._flag(self.leader(k), Evidence("inconsistent", (same.key, odd.key),
                                                    (same.payload, odd.payload)))
            if value is not None:
                gate_in[(k, i)] = value

        levels = defaultdict(list)
        level_of = self._levels()
        for gate in c.gates:
            levels[level_of[gate.id]].append(gate)
        for level in sorted(levels):
            for gate in levels[level]:
                ldr = self.leader(gate.id)
                ins = [gate_in.get((gate.id, src)) for src in (gate.left, gate.right)]
                if None in ins:
                    src = (gate.left, gate.right)[ins.index(None)]
                    self._flag(ldr, Evidence("missing", (self._expected_key(src, gate.id),)))
                    continue
                if gate.left == gate.right:
                    ins = [gate_in[(gate.id, gate.left)]] * 2
                b = gate.apply(ins[0], ins[1], q)
                self.metrics.operations += 1
                self.leader_out[gate.id] = b
                if gate.id == self.output_node:
                    members = g.quorums[gate.id].members
                    self._queue(self._broadcast(ldr, b, gate.id, members, "OUTPUT", gate.id))
                    self.metrics.latency_rounds += BROADCAST_ROUNDS
                else:
                    # one envelope per distinct receiving leader
                    receivers = dict.fromkeys(self.leader(k) for k in c.successors[gate.id])
                    self._queue([Envelope("GATE_OUT", b, 0, ldr, r, gate.id) for r in receivers])
            for env in self._step():
                if env.kind == "GATE_OUT":
                    for k in c.successors[env.slot]:
                        if self.leader(k) == env.receiver:
                            gate_in[(k, env.slot)] = env.payload
                elif env.kind == "OUTPUT" and verify(g, env.receiver, env.signature, env.payload):
                    self.metrics.operations += 1
                    self.output_view[env.receiver] = (env.payload, env.key)
        for p in g.quorums[self.output_node].members:
            if p not in self.output_view:
                self._flag(p, Evidence("missing", (("OUTPUT", 0, self.output_node,
                                                    self.leader(self.output_node), p),)))

        # phase 3: result back through the same leaders
        held: dict[int, list[Envelope]] = defaultdict(list)
        back_value: dict[int, int] = {}
        if self.output_node in self.leader_out:
            back_value[self.output_node] = self.leader_out[self.output_node]
        by_dist = defaultdict(list)
        for gate in c.gates:
            by_dist[self._dist_to_output[gate.id]].append(gate.id)
        for d in sorted(by_dist):
            for v in by_dist[d]:
                ldr = self.leader(v)
                if v != self.output_node:
                    got = sorted(held[v], key=lambda e: e.key)
                    if not got:
                        self._flag(ldr, Evidence("missing", (self._expected_back_key(v),)))
                        continue
                    if len({e.payload for e in got}) > 1:
                        self._flag(ldr, Evidence("inconsistent", (got[0].key, got[1].key),
                                                 (got[0].payload, got[1].payload)))
                    back_value[v] = got[0].payload
                if v not in back_value:
                    continue  # the output leader computed nothing
                receivers = dict.fromkeys(self.leader(j) for j in c.predecessors(v) if j >= n)
                self._queue([Envelope("RESULT_BACK", back_value[v], 0, ldr, r, v) for r in receivers])
            for env in self._step():
                for j in c.predecessors(env.slot):
                    if j >= n and self.leader(j) == env.receiver:
                        held[j].append(env)

        # phase 4: right-neighbour leaders broadcast into input quorums
        for i in range(n):
            members = g.quorums[i].members
            for k in c.successors[i]:
                if k in back_value:
                    self._queue(self._broadcast(self.leader(k), back_value[k], i, members,
                                                "RESULT_IN", (i, k)))
        self.metrics.latency_rounds += BROADCAST_ROUNDS
        member_result: dict[tuple[int, int], list[Envelope]] = defaultdict(list)
        for env in self._step():
            if verify(g, env.receiver, env.signature, env.payload):
                self.metrics.operations += 1
                member_result[(env.slot[0], env.receiver)].append(env)
        for i in range(n):
            for p in g.quorums[i].unmarked():
                got = sorted(member_result.get((i, p), []), key=lambda e: e.slot)
                if not got:
                    continue
                if len({e.payload for e in got}) > 1:
                    self._flag(p, Evidence("inconsistent", (got[0].key, got[1].key),
                                           (got[0].payload, got[1].payload)))
                self._queue([Envelope("RESULT", got[0].payload, 0, p, i, i)])
        to_sender = defaultdict(list)
        for env in self._step():
            to_sender[env.receiver].append(env)
        results: dict[int, int | None] = {}
        for i in range(n):
            unmarked = set(g.quorums[i].unmarked())
            envs = [e for e in to_sender.get(i, []) if e.sender in unmarked]
            self.metrics.operations += len(envs)
            value = majority([e.payload for e in envs])
            results[i] = value
            if value is not None:
                self.result_keys[i] = next(e.key for e in envs if e.payload == value)
            else:
                self._flag(i, Evidence("missing", (("RESULT", 0, i, -1, i),)))
        self.results = results
        return results

    def _levels(self) -> dict[int, int]:
        level = {v: 0 for v in range(self.n)}
        for v in self.circuit.topo_order:
            if v >= self.n:
                level[v] = 1 + max(level[p] for p in self.circuit.predecessors(v))
        return level

    def _expected_key(self, src: int, gate: int) -> tuple:
        if src < self.n:
            return ("RELAY_IN", 0, src, -1, self.leader(gate))
        return ("GATE_OUT", 0, src, self.leader(src), self.leader(gate))

    def _expected_back_key(self, v: int) -> tuple:
        succ = min(self.circuit.successors[v])
        return ("RESULT_BACK", 0, succ, self.leader(succ), self.leader(v))

    # -- TRIGGER-CHECK -----------------------------------------------------

    def trigger_probability(self) -> float:
        return 1.0 / iterated_log(self.circuit.n_nodes) ** 2

    def trigger_check(self) -> tuple[bool, float]:
        """Output quorum draws a uniform value; CHECK runs if it is small enough.

        Each member contributes a uniform in [0, 1) and the fractional part of
        their sum is taken, which is exactly uniform.
        """
        q = self.graph.quorums[self.output_node]
        draws = self.rng_trigger.random(q.size)
        value = float(draws.sum() % 1.0)
        self.metrics.messages += q.size * q.size
        self.metrics.operations += q.size
        return value <= self.trigger_probability(), value

    # -- CHECK -------------------------------------------------------------

    def _check_costs(self) -> dict:
        c, g = self.circuit, self.graph
        n = self.n
        e_gg = sum(1 for gate in c.gates for s in (gate.left, gate.right) if s >= n)
        a = sum(len(c.successors[k]) * g.quorums[k].size for k in range(n))
        b = sum(g.quorums[k].size for k in range(n))
        qo = g.quorums[self.output_node].size
        return dict(e_gg=e_gg, a=a, b=b, qo=qo, m=c.m)

    def check_round_cost(self, i: int, costs: dict | None = None) -> tuple[int, int, int]:
        """(messages, operations, latency) of CHECK round ``i``, from the algorithm's structure."""
        k = costs if costs is not None else self._check_costs()
        e_gg, a, b, qo, m = k["e_gg"], k["a"], k["b"], k["qo"], k["m"]
        elect_msgs, elect_ops = qo * qo, qo
        # REQUEST and RESEND-RESULT share one shape
        relay_msgs = 3 * qo + qo * i + 2 * i * e_gg + 3 * i * a + b
        relay_ops = qo + i * a
        recompute_msgs = 3 * b + a * i + i * m + i * e_gg + 3 * i * qo + qo
        recompute_ops = b + m + i * 2 * m + i * qo
        msgs = elect_msgs + 2 * relay_msgs + recompute_msgs
        ops = elect_ops + 2 * relay_ops + recompute_ops
        latency = 1 + 3 * (self.circuit.depth + 1 + BROADCAST_ROUNDS)
        return msgs, ops, latency

    def _subquorum_picks(self, R: np.ndarray, sizes: np.ndarray, padded: np.ndarray) -> np.ndarray:
        # R[k, k'-1] is uniform in 1..k'; pick index R[k, |U_k|] among sorted unmarked members
        idx = R[np.arange(len(sizes)), sizes - 1] - 1
        return padded[np.arange(len(sizes)), idx]

    def check(self) -> CheckOutcome:
        """Up to 16 log*(m+n) rounds of REQUEST / RECOMPUTE / RESEND-RESULT."""
        c, g = self.circuit, self.graph
        self.metrics.check_calls += 1
        costs = self._check_costs()
        gate_ids = np.arange(self.n, c.n_nodes)
        unmarked = [g.quorums[int(v)].unmarked() for v in gate_ids]
        sizes = np.array([len(u) for u in unmarked])
        width = g.max_quorum_size
        padded = np.full((len(gate_ids), width), -1, dtype=np.int64)
        for row, u in enumerate(unmarked):
            padded[row, : len(u)] = u
        bad_mask = np.zeros(g.n_parties, dtype=bool)
        bad_mask[list(g.bad)] = True

        subquorums = {name: [] for name in ("S1", "S2", "S3")}
        self.adversary.begin_check(self)
        out_q = g.quorums[self.output_node]
        for i in range(1, self.check_rounds + 1):
            r = elect(out_q, self.rng_elect)
            R = {name: np.floor(self.rng_check.random((c.m, width)) * np.arange(1, width + 1))
                 .astype(np.int64) + 1 for name in subquorums}
            picks = {name: self._subquorum_picks(R[name], sizes, padded) for name in subquorums}
            for name in subquorums:
                subquorums[name].append(picks[name])
            msgs, ops, lat = self.check_round_cost(i, costs)
            self.metrics.messages += msgs
            self.metrics.operations += ops
            self.metrics.latency_rounds += lat

            if i == 1 and self.flags:
                party, evidence = self.flags[0]
                return self._detected(i, party, evidence)
            checkers = dict(zip(gate_ids.tolist(), picks["S2"].tolist()))
            bad_nodes = {v for v, p in checkers.items() if bad_mask[p]}
            hides = self.adversary.check_round(self, i, checkers, bad_nodes)
            recomputed = self._recomputed_output(hides)
            found = self._discrepancy(i, r, recomputed)
            if found is not None:
                return self._detected(i, *found)
        return CheckOutcome(False, self.check_rounds, dag_sizes=self.adversary.dag_sizes())

    def _recomputed_output(self, hides: bool) -> int:
        if hides:
            return self.output_view_value()
        return self.ideal_values[self.output_node]

    def output_view_value(self):
        for p in sorted(self.output_view):
            if not self.is_bad(p):
                return self.output_view[p][0]
        return None

    def _discrepancy(self, i: int, r: int, value: int):
        """First good party whose COMPUTE-CIRCUIT view disagrees with round ``i``'s result."""
        out = self.output_node
        for p in self.graph.quorums[out].members:
            if self.is_bad(p):
                continue
            seen = self.output_view.get(p)
            fresh = Envelope("CHK_OUTPUT", value, i, self.leader(out), p, out)
            if seen is None or seen[0] != value:
                self.log.schedule(fresh)
                self.log.deliver(fresh)
                if seen is None:
                    return p, Evidence("missing", (("OUTPUT", 0, out, self.leader(out), p),))
                return p, Evidence("inconsistent", (seen[1], fresh.key), (seen[0], value))
        for s in range(self.n):
            if self.is_bad(s):
                continue
            got = self.results.get(s)
            if got != value:
                fresh = Envelope("CHK_RESULT", value, i, r, s, s)
                self.log.schedule(fresh)
                self.log.deliver(fresh)
                if got is None:
                    return s, Evidence("missing", (("RESULT", 0, s, -1, s),))
                old = self.log.actual[self.result_keys[s]]
                return s, Evidence("inconsistent", (old.key, fresh.key), (old.payload, value))
        return None

    def _detected(self, i: int, party: int, evidence: Evidence) -> CheckOutcome:
        self.metrics.checks_detected += 1
        return CheckOutcome(True, i, party, evidence, self.adversary.dag_sizes())

    def record_check_deviation(self, i: int, node: int, checker: int, value: int,
                               receivers: list[int], honest: int) -> None:
        """Log a bad checker's deviating output in CHECK round ``i``."""
        signed = node == self.output_node
        for r in receivers:
            env = Envelope("CHK_VALUE", value, i, checker, r, node, intended=honest)
            if signed:
                sig = broadcast(self.graph, checker, value, node, [r], kind="CHK_VALUE", round=i,
                                slot=node, metrics=Metrics())[0].signature
                env.signature = sig
            self.log.schedule(env)
            self.log.deliver(env)

    # -- UPDATE ------------------------------------------------------------

    def home_quorum(self, party: int, evidence: Evidence | None = None) -> int:
        if evidence is not None:
            for key in evidence.keys:
                slot = key[2]
                if party in self.graph.quorums.get(slot, self.graph.quorums[self.output_node]).members:
                    return slot
        return min(self.graph.party_index[party])

    def verify_claim(self, initiator: int, evidence: Evidence) -> bool:
        """What the initiator's quorum checks before letting UPDATE proceed."""
        if evidence is None:
            return False
        if evidence.kind == "inconsistent":
            if len(evidence.keys) != 2 or len(evidence.claimed) != 2:
                return False
            if evidence.claimed[0] == evidence.claimed[1]:
                return False
            for key, claimed in zip(evidence.keys, evidence.claimed):
                env = self.log.actual.get(tuple(key))
                if env is None or env.receiver != initiator or env.payload != claimed:
                    return False
            return True
        if evidence.kind == "missing":
            key = tuple(evidence.keys[0])
            if key[-1] != initiator:
                return False
            return not any(k[:3] == key[:3] and k[4] == initiator for k in self.log.actual)
        return False

    def update(self, initiator: int, evidence: Evidence) -> UpdateOutcome:
        """Verify the claim, notify every quorum, INVESTIGATE and mark conflicts."""
        g = self.graph
        self.metrics.update_calls += 1
        b0, g0 = g.marked_counts()
        f0 = potential(b0, g0, g.gamma)
        qid = self.home_quorum(initiator, evidence)
        q_home = g.quorums[qid]
        self.metrics.messages += 3 * q_home.size
        self.metrics.operations += q_home.size
        if not self.verify_claim(initiator, evidence):
            # only a bad party can present a claim that fails verification
            swept = self.mark_in_conflicts([], [initiator])
            b1, g1 = g.marked_counts()
            outcome = UpdateOutcome("BOGUS_CLAIM", initiator, [], [initiator], swept, f0,
                                    potential(b1, g1, g.gamma))
            self.update_history.append(outcome)
            return outcome
        self.metrics.messages += q_home.size * sum(q.size for q in g.quorums.values())
        pairs, convicted = self.investigate()
        swept = self.mark_in_conflicts(pairs, convicted)
        b1, g1 = g.marked_counts()
        outcome = UpdateOutcome("MARKED", initiator, pairs, convicted, swept, f0,
                                potential(b1, g1, g.gamma))
        self.update_history.append(outcome)
        return outcome

    def publication(self, party: int) -> Publication | None:
        if self.is_bad(party):
            return self.adversary.publish(party, self)
        return self.truthful_publication(party)

    def truthful_publication(self, party: int) -> Publication:
        sent = {e.key: e.payload for e in self.log.sent_by(party)}
        received = {e.key: (e.payload, e.signature) for e in self.log.received_by(party)}
        return Publication(sent, received)

    def claimed_publication(self, party: int) -> Publication:
        """Claims every scheduled send went out honestly and reports receipts as they were."""
        sent = {k: v for k, v in self.log.scheduled.items() if k[3] == party}
        received = {e.key: (e.payload, e.signature) for e in self.log.received_by(party)}
        return Publication(sent, received)

    def investigate(self) -> tuple[list[ConflictPair], list[int]]:
        """Exchange transcripts and return the conflict pairs and convicted parties."""
        g = self.graph
        participants = self.log.participants()
        pubs = {p: self.publication(p) for p in sorted(participants) if p >= 0}
        slots = defaultdict(set)
        for key in self.log.scheduled:
            slots[key[3]].add(key[2])
        for key in self.log.actual:
            slots[key[4]].add(key[2])
        for p, pub in pubs.items():
            for s in slots[p]:
                q = g.quorums.get(s)
                if q is None:
                    continue
                self.metrics.messages += q.size + sum(g.quorums[nb].size for nb in q.neighbors)
            if pub is not None:
                self.metrics.operations += len(pub.sent) + len(pub.received)

        pairs: dict[frozenset, ConflictPair] = {}
        convicted: set[int] = set()
        keys = set(self.log.scheduled) | set(self.log.actual)
        for key in sorted(keys, key=repr):
            x, y = key[3], key[4]
            if x < 0 or y < 0 or x == y:
                continue
            py, px = pubs.get(y), pubs.get(x)
            if py is None:
                continue  # a silent receiver accuses nobody
            rec = py.received.get(key)
            claim = px.sent.get(key) if px is not None else None
            rec_payload = rec[0] if rec is not None else None
            if rec_payload == claim:
                continue
            sig = rec[1] if rec is not None else None
            if (sig is not None and claim is not None and sig.sender == x
                    and verify(g, y, sig, rec_payload)):
                convicted.add(x)  # x's own quorum signed what it now denies
                continue
            pair = frozenset((x, y))
            if pair not in pairs:
                pairs[pair] = ConflictPair(min(x, y), max(x, y), (key, rec_payload, claim))
        convicted |= self._miscomputations(pubs)
        return list(pairs.values()), sorted(convicted)

    def _miscomputations(self, pubs: dict) -> set[int]:
        """Leaders whose own published transcript shows a wrong gate or relay."""
        c = self.circuit
        guilty = set()
        for key, _ in self.log.scheduled.items():
            if key[1] != 0 or key[0] not in ("GATE_OUT", "OUTPUT", "RESULT_BACK"):
                continue
            v, x = key[2], key[3]
            pub = pubs.get(x)
            if pub is None or key not in pub.sent:
                continue
            if key[0] == "RESULT_BACK":
                if self._bad_relay(v, x, pub, pub.sent[key]):
                    guilty.add(x)
                continue
            gate = c.gate(v)
            ins = []
            for src in (gate.left, gate.right):
                vals = [val for k, (val, _) in pub.received.items()
                        if k[2] == src and k[0] in ("GATE_OUT", "RELAY_IN")]
                ins.append(majority(vals) if src < self.n else (vals[0] if vals else None))
            if None in ins:
                continue
            if gate.apply(ins[0], ins[1], c.modulus) != pub.sent[key]:
                guilty.add(x)
        return guilty

    def _bad_relay(self, v: int, x: int, pub: Publication, sent) -> bool:
        if v == self.output_node:
            own = [val for k, val in pub.sent.items() if k[0] == "OUTPUT" and k[2] == v]
            return bool(own) and own[0] != sent
        got = sorted((k[2], val) for k, (val, _) in pub.received.items()
                     if k[0] == "RESULT_BACK" and k[4] == x and k[2] in self.circuit.successors[v])
        return bool(got) and got[0][1] != sent

    def mark_in_conflicts(self, pairs, convicted) -> list[int]:
        """Mark every party in ``pairs`` and ``convicted``; sweep once after the batch."""
        g = self.graph
        for pair in pairs:
            qy = g.quorums[min(g.party_index[pair.b])]
            qx = g.quorums[min(g.party_index[pair.a])]
            self.metrics.messages += 3 * qy.size + qy.size * qx.size
        parties = sorted({p for pair in pairs for p in (pair.a, pair.b)} | set(convicted))
        newly = [p for p in parties if not g.is_marked(p)]
        for p in newly:
            if self.is_bad(p):
                self.metrics.marked_bad += 1
            else:
                self.metrics.marked_good += 1
        return g.mark_parties(parties, self.rng_elect)
