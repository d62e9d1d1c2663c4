"""Simulator for self-healing reliable multiparty computation over quorums."""

from .adversary import (
    CorruptLeader,
    DeceptionDag,
    Drop,
    Equivocate,
    Passive,
    Strategy,
    make_strategy,
)
from .broadcast import Envelope, QuorumSignature, broadcast, verify
from .circuit import (
    Circuit,
    CircuitError,
    Gate,
    Op,
    build_circuit,
    evaluate_ideal,
    iterated_log,
    load_circuit,
    random_layered_circuit,
    save_circuit,
)
from .engine import Metrics, component_rng
from .experiments import RunConfig, detection_probability, k_star, lemma1_trial, long_run
from .protocol import ConflictPair, Simulation, UpdateOutcome
from .quorums import QuorumError, QuorumGraph, build_quorum_graph, elect

__all__ = [
    "Circuit", "CircuitError", "ConflictPair", "CorruptLeader", "DeceptionDag", "Drop",
    "Envelope", "Equivocate", "Gate", "Metrics", "Op", "Passive", "QuorumError", "QuorumGraph",
    "QuorumSignature", "RunConfig", "Simulation", "Strategy", "UpdateOutcome", "broadcast",
    "build_circuit", "build_quorum_graph", "component_rng", "detection_probability", "elect",
    "evaluate_ideal", "iterated_log", "k_star", "lemma1_trial", "load_circuit", "long_run",
    "make_strategy", "random_layered_circuit", "save_circuit", "verify",
]
