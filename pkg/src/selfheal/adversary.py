"""Adversary strategies.

The bad roster is fixed when the quorum graph is built and read from
``sim.graph.bad`` (a frozenset), so a strategy cannot grow it.  A strategy
sees every good envelope of a round before choosing what the bad parties
send (rushing), chooses what a bad broadcaster asks its quorum to sign, and
decides what bad parties publish during INVESTIGATE.

``blame`` picks the publication policy of bad parties:

``"frame"``
    claim every scheduled message went out honestly and report receipts as
    they were.  This puts a bad sender in conflict with every good party it
    cheated, which is the worst case for the number of good parties marked.
``"truthful"``
    publish the real transcript.
``"silent"``
    publish nothing.
"""

from __future__ import annotations

import numpy as np

from .protocol import Publication, Simulation, max_rooted_subgraph

BLAME_POLICIES = ("frame", "truthful", "silent")


class Strategy:
    name = "PASSIVE"

    def __init__(self, blame: str = "frame", seed: int | None = None):
        if blame not in BLAME_POLICIES:
            raise ValueError(f"blame must be one of {BLAME_POLICIES}")
        self.blame = blame
        self.rng = np.random.default_rng(seed)
        self._dag_sizes: list[int] = []

    # -- COMPUTE-CIRCUIT ---------------------------------------------------

    def begin_compute(self, sim: Simulation) -> None:
        pass

    def act(self, bad_intended, good, sim: Simulation):
        out = []
        for env in bad_intended:
            new = self.tamper(env, sim)
            if new is not None:
                out.append(new)
        return out

    def tamper(self, env, sim: Simulation):
        return env

    def tamper_broadcast(self, kind: str, slot: int, sender: int, payload, sim: Simulation):
        return payload

    # -- CHECK -------------------------------------------------------------

    def begin_check(self, sim: Simulation) -> None:
        self._dag_sizes = []

    def check_round(self, sim: Simulation, i: int, checkers: dict, bad_nodes: set) -> bool:
        """Return True when the round's recomputation keeps the corruption hidden."""
        return False

    def dag_sizes(self) -> list[int]:
        return list(self._dag_sizes)

    # -- INVESTIGATE -------------------------------------------------------

    def publish(self, party: int, sim: Simulation) -> Publication | None:
        if self.blame == "silent":
            return None
        if self.blame == "truthful":
            return sim.truthful_publication(party)
        return sim.claimed_publication(party)


class Passive(Strategy):
    """Bad parties follow the protocol."""

    def __init__(self, blame: str = "truthful", seed: int | None = None):
        super().__init__(blame, seed)


class CorruptLeader(Strategy):
    """Bad leaders add one to the value they forward.

    With ``single`` set, one bad-led gate is chosen per COMPUTE; otherwise
    each bad-led gate corrupts independently with probability ``q``.  With
    ``relay_fallback`` set, a COMPUTE with no bad leader still sees one
    unmarked bad input-quorum member relay a wrong input; the majority
    filter absorbs it, but it keeps unmarked bad parties exposed.
    """

    name = "CORRUPT_LEADER"

    def __init__(self, q: float = 1.0, single: bool = False, relay_fallback: bool = False,
                 blame: str = "frame", seed: int | None = None):
        super().__init__(blame, seed)
        self.q = q
        self.single = single
        self.relay_fallback = relay_fallback
        self.targets: set[int] = set()
        self.liar: tuple[int, int] | None = None

    def begin_compute(self, sim: Simulation) -> None:
        bad_led = [g.id for g in sim.circuit.gates if sim.is_bad(sim.leader(g.id))]
        if self.single:
            self.targets = {bad_led[int(self.rng.integers(len(bad_led)))]} if bad_led else set()
        else:
            self.targets = {v for v in bad_led if self.rng.random() < self.q}
        self.liar = None
        if self.relay_fallback and not self.targets:
            spots = [(p, i) for i in range(sim.n) for p in sim.graph.quorums[i].unmarked()
                     if sim.is_bad(p)]
            if spots:
                self.liar = spots[int(self.rng.integers(len(spots)))]

    def tamper(self, env, sim):
        if env.kind == "GATE_OUT" and env.slot in self.targets:
            return env.rewrite((env.payload + 1) % sim.circuit.modulus)
        if env.kind == "RELAY_IN" and (env.sender, env.slot) == self.liar:
            return env.rewrite((env.payload + 1) % sim.circuit.modulus)
        return env

    def tamper_broadcast(self, kind, slot, sender, payload, sim):
        if kind == "OUTPUT" and slot in self.targets:
            return (payload + 1) % sim.circuit.modulus
        return payload


class Equivocate(Strategy):
    """Bad leaders send different values to different recipients."""

    name = "EQUIVOCATE"

    def act(self, bad_intended, good, sim):
        out = []
        first_seen: set[tuple] = set()
        for env in sorted(bad_intended, key=lambda e: e.key):
            ident = (env.kind, env.slot, env.sender)
            if env.kind in ("GATE_OUT", "RESULT_BACK"):
                if ident in first_seen:
                    env = env.rewrite((env.payload + 1) % sim.circuit.modulus)
                first_seen.add(ident)
            out.append(env)
        return out

    def tamper_broadcast(self, kind, slot, sender, payload, sim):
        if kind != "OUTPUT":
            return payload
        members = sim.graph.quorums[slot].members
        alt = (payload + 1) % sim.circuit.modulus
        return {p: (payload if k % 2 == 0 else alt) for k, p in enumerate(members)}


class Drop(Strategy):
    """Bad leaders send nothing and refuse to broadcast."""

    name = "DROP"

    def tamper(self, env, sim):
        if env.kind in ("GATE_OUT", "RESULT_BACK"):
            return None
        return env

    def tamper_broadcast(self, kind, slot, sender, payload, sim):
        if kind in ("OUTPUT", "RESULT_IN"):
            return None
        return payload


def current_deception_dag(sim: Simulation, nodes) -> tuple[frozenset, int | None]:
    """Largest rooted subgraph of gate ``nodes`` (ties to the smallest root)."""
    c = sim.circuit
    return max_rooted_subgraph(nodes, lambda v: [u for u in c.predecessors(v) if u >= c.n_inputs])


class DeceptionDag(Strategy):
    """Corrupt at the root of the largest all-bad leader subgraph, then try to stay hidden.

    During CHECK round ``i`` the corruption survives only on the part of
    the previous subgraph whose new checkers are all bad; once no rooted
    subgraph is left the recomputation is honest.
    """

    name = "DECEPTION_DAG"

    def __init__(self, blame: str = "frame", seed: int | None = None):
        super().__init__(blame, seed)
        self.dag: frozenset = frozenset()
        self.root: int | None = None

    def begin_compute(self, sim):
        bad_led = [g.id for g in sim.circuit.gates if sim.is_bad(sim.leader(g.id))]
        self.dag, self.root = current_deception_dag(sim, bad_led)

    def tamper(self, env, sim):
        if env.kind == "GATE_OUT" and env.slot == self.root:
            return env.rewrite((env.payload + 1) % sim.circuit.modulus)
        return env

    def tamper_broadcast(self, kind, slot, sender, payload, sim):
        if kind == "OUTPUT" and slot == self.root:
            return (payload + 1) % sim.circuit.modulus
        return payload

    def begin_check(self, sim):
        super().begin_check(sim)
        self._live = self.dag
        self._dag_sizes = [len(self.dag)]

    def check_round(self, sim, i, checkers, bad_nodes):
        survivors = self._live & bad_nodes
        dag, root = current_deception_dag(sim, survivors)
        assert dag <= self._live, "deception subgraph grew"
        self._live = dag
        self._dag_sizes.append(len(dag))
        if root is None:
            return False
        c = sim.circuit
        honest = sim.ideal_values[root]
        value = (honest + 1) % c.modulus
        if root == c.output_gate:
            receivers = list(sim.graph.quorums[root].members)
        else:
            receivers = [checkers[k] for k in c.successors[root]]
        sim.record_check_deviation(i, root, checkers[root], value, receivers, honest)
        return True


STRATEGIES = {
    "PASSIVE": Passive,
    "CORRUPT_LEADER": CorruptLeader,
    "EQUIVOCATE": Equivocate,
    "DROP": Drop,
    "DECEPTION_DAG": DeceptionDag,
}


def make_strategy(name: str, **kwargs) -> Strategy:
    try:
        cls = STRATEGIES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {sorted(STRATEGIES)}") from None
    return cls(**kwargs)
