import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfheal.circuit import (
    CircuitError,
    Op,
    build_circuit,
    evaluate_all,
    evaluate_ideal,
    iterated_log,
    load_circuit,
    random_layered_circuit,
    save_circuit,
)

P = 2**31 - 1


def recursive_eval(spec, inputs, node, memo=None):
    # independent oracle working straight from the JSON dict
    memo = {} if memo is None else memo
    n = spec["n_inputs"]
    if node < n:
        return inputs[node] % spec["modulus"]
    if node in memo:
        return memo[node]
    g = next(g for g in spec["gates"] if g["id"] == node)
    x = recursive_eval(spec, inputs, g["in"][0], memo)
    y = recursive_eval(spec, inputs, g["in"][1], memo)
    q = spec["modulus"]
    if g["op"] == "ADD":
        v = (x + y) % q
    elif g["op"] == "MUL":
        v = x * y % q
    else:
        a, b, c = g["coeffs"]
        v = (a * x + b * y + c) % q
    memo[node] = v
    return v


def tiny():
    return {
        "n_inputs": 2,
        "modulus": P,
        "output_gate": 3,
        "gates": [
            {"id": 2, "op": "ADD", "in": [0, 1]},
            {"id": 3, "op": "MUL", "in": [2, 1]},
        ],
    }


def test_tiny_circuit_values():
    c = build_circuit(tiny())
    assert c.m == 2 and c.depth == 2
    assert evaluate_ideal(c, [3, 4]) == (3 + 4) * 4


def test_affine_gate():
    spec = {"n_inputs": 2, "modulus": 7, "output_gate": 2,
            "gates": [{"id": 2, "op": "AFFINE", "in": [0, 1], "coeffs": [2, 3, 5]}]}
    assert evaluate_ideal(build_circuit(spec), [1, 1]) == (2 + 3 + 5) % 7


@pytest.mark.parametrize("seed", range(10))
def test_random_circuit_matches_recursive_oracle(seed):
    rng = np.random.default_rng(seed)
    c = random_layered_circuit(16, 64, rng=rng)
    spec = c.to_dict()
    for _ in range(100):
        x = [int(v) for v in rng.integers(0, P, 16)]
        assert evaluate_ideal(c, x) == recursive_eval(spec, x, c.output_gate)


def test_generator_shape():
    c = random_layered_circuit(32, 128, rng=0)
    assert c.n_inputs == 32 and c.m == 128
    for v, outs in c.successors.items():
        assert len(outs) <= 2
        if v != c.output_gate:
            assert outs
    assert c.successors[c.output_gate] == ()


def test_requested_depth_is_exact():
    c = random_layered_circuit(8, 40, depth=9, rng=3)
    assert c.depth == 9


def test_json_round_trip(tmp_path):
    c = random_layered_circuit(8, 20, rng=1)
    path = tmp_path / "c.json"
    save_circuit(c, path)
    c2 = load_circuit(path)
    assert c2.to_dict() == c.to_dict()
    assert json.loads(path.read_text())["n_inputs"] == 8


def test_cycle_detected():
    spec = {"n_inputs": 2, "output_gate": 4, "gates": [
        {"id": 2, "op": "ADD", "in": [0, 3]},
        {"id": 3, "op": "ADD", "in": [1, 2]},
        {"id": 4, "op": "ADD", "in": [2, 3]},
    ]}
    with pytest.raises(CircuitError) as err:
        build_circuit(spec)
    assert err.value.code in ("CYCLE_DETECTED", "DEGREE_VIOLATION")


def test_pure_cycle_detected():
    spec = {"n_inputs": 1, "output_gate": 2, "gates": [
        {"id": 1, "op": "ADD", "in": [0, 2]},
        {"id": 2, "op": "ADD", "in": [0, 1]},
    ]}
    with pytest.raises(CircuitError) as err:
        build_circuit(spec)
    assert err.value.code == "CYCLE_DETECTED"


def test_three_outputs_rejected():
    spec = tiny()
    spec["gates"] += [{"id": 4, "op": "ADD", "in": [0, 2]}, {"id": 5, "op": "ADD", "in": [0, 3]}]
    spec.pop("output_gate")
    with pytest.raises(CircuitError) as err:
        build_circuit(spec)
    assert err.value.code == "DEGREE_VIOLATION"


def test_two_sinks_rejected():
    spec = {"n_inputs": 2, "gates": [
        {"id": 2, "op": "ADD", "in": [0, 1]},
        {"id": 3, "op": "MUL", "in": [0, 1]},
    ]}
    with pytest.raises(CircuitError) as err:
        build_circuit(spec)
    assert err.value.code == "MULTIPLE_OUTPUT_GATES"


def test_unary_gate_rejected():
    spec = {"n_inputs": 1, "gates": [{"id": 1, "op": "ADD", "in": [0]}]}
    with pytest.raises(CircuitError) as err:
        build_circuit(spec)
    assert err.value.code == "DEGREE_VIOLATION"


def test_input_arity():
    c = build_circuit(tiny())
    with pytest.raises(CircuitError) as err:
        evaluate_all(c, [1])
    assert err.value.code == "INPUT_ARITY_MISMATCH"


def test_iterated_log_values():
    assert [iterated_log(x) for x in (1, 2, 4, 16, 17, 65536, 65537)] == [0, 1, 2, 3, 4, 4, 5]


@given(st.integers(min_value=2, max_value=10**9))
def test_iterated_log_recursion(x):
    assert iterated_log(x) == 1 + iterated_log(max(1, math.ceil(math.log2(x))) if math.log2(x) > 1 else 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_generator_topological_order(n, extra, seed):
    c = random_layered_circuit(n, n - 1 + extra if n - 1 + extra >= 1 else 1, rng=seed)
    pos = {v: i for i, v in enumerate(c.topo_order)}
    for g in c.gates:
        assert pos[g.left] < pos[g.id] and pos[g.right] < pos[g.id]
    assert sum(1 for g in c.gates if not c.successors[g.id]) == 1
