import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfheal.circuit import random_layered_circuit
from selfheal.engine import Metrics
from selfheal.quorums import (
    QuorumError,
    build_quorum_graph,
    default_quorum_size,
    elect,
    sweep_threshold,
)


@pytest.fixture(scope="module")
def circuit():
    return random_layered_circuit(64, 128, rng=5)


def test_thresholds():
    assert sweep_threshold(16, 0.01) == 8
    assert sweep_threshold(8, 0.01) == 4
    assert sweep_threshold(100, 0.01) == 49
    assert default_quorum_size(64) == 24
    assert default_quorum_size(8) == 8
    assert default_quorum_size(12) == 12


def test_quarter_bound_every_quorum(circuit):
    g = build_quorum_graph(circuit, 64, 16, 15, rng=1)
    assert len(g.quorums) == circuit.n_nodes
    for qid, q in g.quorums.items():
        assert q.size == 16
        assert g.bad_fraction(qid) <= 0.25
        assert q.leader in q.members


def test_balanced_load(circuit):
    g = build_quorum_graph(circuit, 64, 16, 0, rng=2)
    loads = np.array([len(g.party_index[p]) for p in range(64)])
    assert loads.max() - loads.min() <= 1


def test_infeasible_fraction(circuit):
    with pytest.raises(QuorumError) as err:
        build_quorum_graph(circuit, 64, 16, 32, rng=0)
    assert err.value.code == "INFEASIBLE_BAD_FRACTION"


def test_bad_quorum_size(circuit):
    with pytest.raises(QuorumError) as err:
        build_quorum_graph(circuit, 64, 4, 0, rng=0)
    assert err.value.code == "BAD_QUORUM_SIZE"


def test_mark_and_sweep(circuit):
    g = build_quorum_graph(circuit, 64, 16, 15, rng=3)
    rng = np.random.default_rng(0)
    q = g.quorums[70]
    victims = list(q.members[:7])
    g.mark_parties(victims, rng)
    assert len(q.marked) == 7
    g.check_consistent()
    with pytest.raises(QuorumError) as err:
        g.unmark_sweep(70)
    assert err.value.code == "BELOW_THRESHOLD"
    swept = g.mark_parties([q.members[7]], rng)
    assert 70 in swept
    assert not q.marked
    g.check_consistent()


def test_marked_leader_replaced(circuit):
    g = build_quorum_graph(circuit, 64, 16, 15, rng=4)
    rng = np.random.default_rng(1)
    leader = g.quorums[80].leader
    g.mark_parties([leader], rng)
    for q in g.quorums.values():
        assert q.leader != leader
        assert q.leader not in q.marked


def test_mark_pair_needs_two():
    c = random_layered_circuit(16, 20, rng=0)
    g = build_quorum_graph(c, 16, 8, 0, rng=0)
    with pytest.raises(QuorumError):
        g.mark_pair(3, 3, np.random.default_rng(0))


def test_elect_uniform_over_unmarked():
    c = random_layered_circuit(16, 20, rng=0)
    g = build_quorum_graph(c, 16, 8, 0, rng=0)
    q = g.quorums[16]
    q.marked.update(q.members[:3])
    rng = np.random.default_rng(9)
    m = Metrics()
    draws = [elect(q, rng, m) for _ in range(5000)]
    counts = np.bincount(draws, minlength=16)[list(q.members[3:])]
    assert set(draws) == set(q.members[3:])
    assert counts.min() > 900
    assert m.messages == 5000 * 64 and m.operations == 5000 * 8


def test_elect_fully_marked():
    c = random_layered_circuit(16, 20, rng=0)
    g = build_quorum_graph(c, 16, 8, 0, rng=0)
    q = g.quorums[16]
    q.marked.update(q.members)
    with pytest.raises(QuorumError) as err:
        elect(q, np.random.default_rng(0))
    assert err.value.code == "NO_UNMARKED_MEMBERS"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 63), max_size=40))
def test_invariants_survive_random_marking(seed, parties):
    c = random_layered_circuit(64, 80, rng=seed % 1000)
    g = build_quorum_graph(c, 64, 16, 15, rng=seed)
    rng = np.random.default_rng(seed)
    for p in parties:
        g.mark_parties([p], rng)
        g.check_consistent()
        for q in g.quorums.values():
            assert q.leader not in q.marked
            assert len(q.marked) < sweep_threshold(q.size, g.gamma)
            unmarked = q.unmarked()
            n_bad = sum(x in g.bad for x in unmarked)
            assert 2 * n_bad <= len(unmarked)
