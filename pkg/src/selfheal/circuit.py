"""Arithmetic circuits over a prime field.

A circuit has ``n_inputs`` input nodes (ids ``0..n-1``, one per party) and
``m`` gate nodes (ids ``n..n+m-1``).  Every gate has exactly two inputs and
at most two successors; exactly one gate, the output gate, has none.

The module also provides the trusted evaluator used to decide whether a
protocol run returned a corrupted value, a random layered circuit
generator for experiments, and :func:`iterated_log`.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MODULUS = 2**31 - 1


class CircuitError(ValueError):
    """Raised for malformed circuit descriptions.

    ``code`` is one of ``CYCLE_DETECTED``, ``DEGREE_VIOLATION``,
    ``MULTIPLE_OUTPUT_GATES``, ``INPUT_ARITY_MISMATCH`` or ``BAD_SPEC``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Op(str, enum.Enum):
    ADD = "ADD"
    MUL = "MUL"
    AFFINE = "AFFINE"


@dataclass(frozen=True)
class Gate:
    id: int
    op: Op
    left: int
    right: int
    outs: tuple[int, ...] = ()
    # AFFINE computes a*x + b*y + c
    coeffs: tuple[int, int, int] = (1, 1, 0)

    def apply(self, x: int, y: int, modulus: int) -> int:
        if self.op is Op.ADD:
            return (x + y) % modulus
        if self.op is Op.MUL:
            return (x * y) % modulus
        a, b, c = self.coeffs
        return (a * x + b * y + c) % modulus


@dataclass(frozen=True)
class Circuit:
    n_inputs: int
    gates: tuple[Gate, ...]
    output_gate: int
    modulus: int = DEFAULT_MODULUS
    depth: int = 0
    # node id -> successor ids, for inputs and gates alike
    successors: dict[int, tuple[int, ...]] = field(default_factory=dict, repr=False)
    topo_order: tuple[int, ...] = field(default=(), repr=False)

    @property
    def m(self) -> int:
        return len(self.gates)

    @property
    def n_nodes(self) -> int:
        return self.n_inputs + len(self.gates)

    def gate(self, node: int) -> Gate:
        return self.gates[node - self.n_inputs]

    def is_input(self, node: int) -> bool:
        return 0 <= node < self.n_inputs

    def predecessors(self, node: int) -> tuple[int, ...]:
        if self.is_input(node):
            return ()
        g = self.gate(node)
        return (g.left, g.right)

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "modulus": self.modulus,
            "output_gate": self.output_gate,
            "gates": [
                {
                    "id": g.id,
                    "op": g.op.value,
                    "in": [g.left, g.right],
                    "out": list(g.outs),
                    **({"coeffs": list(g.coeffs)} if g.op is Op.AFFINE else {}),
                }
                for g in self.gates
            ],
        }


def build_circuit(spec: dict) -> Circuit:
    """Validate a circuit description and return a :class:`Circuit`.

    ``spec`` uses the JSON layout: ``n_inputs``, ``gates`` (each with
    ``id``, ``op``, ``in`` and optionally ``out`` and ``coeffs``),
    ``output_gate`` and ``modulus``.  Declared ``out`` lists are checked
    against the successor sets implied by the ``in`` lists.
    """
    try:
        n = int(spec["n_inputs"])
        raw_gates = list(spec["gates"])
    except (KeyError, TypeError) as exc:
        raise CircuitError("BAD_SPEC", f"missing key {exc}") from exc
    modulus = int(spec.get("modulus", DEFAULT_MODULUS))
    if n < 1 or not raw_gates:
        raise CircuitError("BAD_SPEC", "need at least one input and one gate")

    m = len(raw_gates)
    by_id: dict[int, dict] = {}
    for raw in raw_gates:
        gid = int(raw["id"])
        if not n <= gid < n + m or gid in by_id:
            raise CircuitError("BAD_SPEC", f"gate ids must be unique in [{n}, {n + m}), got {gid}")
        by_id[gid] = raw

    succ: dict[int, list[int]] = {v: [] for v in range(n + m)}
    preds: dict[int, tuple[int, int]] = {}
    for gid, raw in by_id.items():
        ins = list(raw.get("in", ()))
        if len(ins) != 2:
            raise CircuitError("DEGREE_VIOLATION", f"gate {gid} has {len(ins)} inputs")
        for src in ins:
            if not 0 <= src < n + m:
                raise CircuitError("BAD_SPEC", f"gate {gid} reads unknown node {src}")
            succ[src].append(gid)
        preds[gid] = (int(ins[0]), int(ins[1]))

    for v, outs in succ.items():
        if len(outs) > 2:
            raise CircuitError("DEGREE_VIOLATION", f"node {v} has {len(outs)} outputs")
        if v < n and not outs:
            raise CircuitError("DEGREE_VIOLATION", f"input {v} feeds no gate")
    for gid, raw in by_id.items():
        if "out" in raw and sorted(raw["out"]) != sorted(succ[gid]):
            raise CircuitError("BAD_SPEC", f"gate {gid} declares outs {raw['out']}, edges give {succ[gid]}")

    sinks = [g for g in by_id if not succ[g]]
    if len(sinks) > 1:
        raise CircuitError("MULTIPLE_OUTPUT_GATES", f"gates {sorted(sinks)} have no successor")
    output = int(spec.get("output_gate", sinks[0] if sinks else -1))
    if sinks and output != sinks[0]:
        raise CircuitError("BAD_SPEC", f"output_gate {output} is not the unique sink {sinks[0]}")

    # Kahn's algorithm over the full node set.
    indeg = {v: (2 if v >= n else 0) for v in range(n + m)}
    queue = deque(v for v in range(n + m) if indeg[v] == 0)
    order: list[int] = []
    level = {v: 0 for v in range(n)}
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                level[w] = 1 + max(level[p] for p in preds[w])
                queue.append(w)
    if len(order) != n + m:
        raise CircuitError("CYCLE_DETECTED", "gate graph contains a cycle")
    if not sinks:
        raise CircuitError("CYCLE_DETECTED", "no output gate")

    gates = []
    for gid in range(n, n + m):
        raw = by_id[gid]
        op = Op(raw["op"])
        coeffs = tuple(int(c) % modulus for c in raw.get("coeffs", (1, 1, 0)))
        gates.append(Gate(gid, op, preds[gid][0], preds[gid][1], tuple(succ[gid]), coeffs))  # type: ignore[arg-type]

    return Circuit(
        n_inputs=n,
        gates=tuple(gates),
        output_gate=output,
        modulus=modulus,
        depth=level[output],
        successors={v: tuple(s) for v, s in succ.items()},
        topo_order=tuple(order),
    )


def load_circuit(path: str | Path) -> Circuit:
    with open(path) as fh:
        return build_circuit(json.load(fh))


def save_circuit(circuit: Circuit, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(circuit.to_dict(), fh, indent=2)


def evaluate_all(circuit: Circuit, inputs) -> dict[int, int]:
    """Value of every node under honest evaluation, in topological order."""
    if len(inputs) != circuit.n_inputs:
        raise CircuitError(
            "INPUT_ARITY_MISMATCH", f"expected {circuit.n_inputs} inputs, got {len(inputs)}"
        )
    q = circuit.modulus
    values = {i: int(x) % q for i, x in enumerate(inputs)}
    for v in circuit.topo_order:
        if v >= circuit.n_inputs:
            g = circuit.gate(v)
            values[v] = g.apply(values[g.left], values[g.right], q)
    return values


def evaluate_ideal(circuit: Circuit, inputs) -> int:
    """The correct output of the circuit on ``inputs``."""
    return evaluate_all(circuit, inputs)[circuit.output_gate]


def iterated_log(x: int) -> int:
    """Number of times log2 must be applied to ``x`` before it is <= 1."""
    if x < 1:
        raise ValueError("iterated_log needs x >= 1")
    count = 0
    value = float(x)
    while value > 1:
        value = math.log2(value)
        count += 1
    return count


def _layer_sizes(n: int, m: int, depth: int) -> list[int]:
    # Layer depth-k holds at most 2**k gates so that every gate can be
    # consumed by the funnel toward the single output gate.  Free input
    # slots stay at 2n whatever has been built, so no layer exceeds n.
    caps = [min(2 ** (depth - layer), n, m) for layer in range(1, depth + 1)]
    if sum(caps) < m:
        raise ValueError(f"depth {depth} too small for {m} gates")
    sizes = [0] * depth
    sizes[-1] = 1
    remaining = m - 1
    open_layers = list(range(depth - 1))
    while remaining and open_layers:
        share = max(1, remaining // len(open_layers))
        for layer in list(open_layers):
            take = min(share, caps[layer] - sizes[layer], remaining)
            sizes[layer] += take
            remaining -= take
            if sizes[layer] >= caps[layer]:
                open_layers.remove(layer)
            if not remaining:
                break
    if remaining or any(s == 0 for s in sizes):
        raise ValueError(f"cannot lay out {m} gates in {depth} layers")
    return sizes


def random_layered_circuit(
    n: int,
    m: int,
    depth: int | None = None,
    rng: np.random.Generator | int | None = None,
    modulus: int = DEFAULT_MODULUS,
    ops: tuple[Op, ...] = (Op.ADD, Op.MUL, Op.AFFINE),
    max_tries: int = 200,
) -> Circuit:
    """Random layered circuit with ``n`` inputs, ``m`` gates and exact depth.

    Each gate in layer L reads one input from layer L-1, so the longest path
    to the output has length ``depth``.  Nodes that nobody reads yet are
    preferred as inputs, which guarantees every node reaches the output.
    """
    rng = np.random.default_rng(rng)
    if m < n - 1:
        raise ValueError("need m >= n - 1 gates to consume every input")
    if depth is None:
        depth = min(m, max(2, math.ceil(4 * m / (3 * n)) + math.ceil(math.log2(n)) + 2))
    if depth > m:
        raise ValueError("depth cannot exceed the number of gates")
    sizes = _layer_sizes(n, m, depth)

    for _ in range(max_tries):
        spec = _try_layered(n, sizes, rng, modulus, ops)
        if spec is not None:
            return build_circuit(spec)
    raise ValueError(f"generator failed for n={n}, m={m}, depth={depth}")


def _try_layered(n, sizes, rng, modulus, ops):
    layers: list[list[int]] = [list(range(n))]
    outdeg: dict[int, int] = {v: 0 for v in range(n)}
    gates = []
    next_id = n
    for size in sizes:
        prev = layers[-1]
        earlier = [v for layer in layers for v in layer]
        this_layer = []
        for _ in range(size):
            unused_prev = [v for v in prev if outdeg[v] == 0]
            free_prev = [v for v in prev if outdeg[v] < 2]
            pool = unused_prev or free_prev
            if not pool:
                return None
            left = int(pool[rng.integers(len(pool))])
            outdeg[left] += 1
            unused = [v for v in earlier if outdeg[v] == 0 and v != left]
            free = [v for v in earlier if outdeg[v] < 2 and v != left]
            pool = unused or free
            if not pool:
                return None
            right = int(pool[rng.integers(len(pool))])
            outdeg[right] += 1
            op = ops[int(rng.integers(len(ops)))]
            raw = {"id": next_id, "op": op.value, "in": [left, right]}
            if op is Op.AFFINE:
                raw["coeffs"] = [int(c) for c in rng.integers(1, modulus, size=3)]
            gates.append(raw)
            outdeg[next_id] = 0
            this_layer.append(next_id)
            next_id += 1
        layers.append(this_layer)
    output = next_id - 1
    if any(d == 0 for v, d in outdeg.items() if v != output):
        return None
    return {"n_inputs": n, "gates": gates, "output_gate": output, "modulus": modulus}
