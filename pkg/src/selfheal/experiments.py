"""Monte Carlo harness: Lemma 1 tail, CHECK detection rate, long runs.

Every function takes an integer seed and derives per-trial seeds from it,
so any (config, seed) pair replays exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .adversary import STRATEGIES, CorruptLeader, make_strategy
from .circuit import iterated_log, random_layered_circuit
from .engine import component_rng
from .protocol import Simulation, max_rooted_subgraph, potential_step
from .quorums import build_quorum_graph, default_quorum_size


class ConfigError(ValueError):
    """Config validation failure; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str, code: str = "CONFIG_INVALID"):
        super().__init__(f"{code}: {field_name}: {message}")
        self.field = field_name
        self.code = code


class ParameterViolation(ValueError):
    code = "PARAMETER_VIOLATION"


@dataclass
class RunConfig:
    n: int = 64
    m: int = 256
    depth: int | None = None
    t: int = 15
    quorum_size: int | None = None
    gamma: float = 0.01
    epsilon: float = 0.01
    strategy: str = "CORRUPT_LEADER"
    blame: str = "frame"
    q: float = 1.0
    single: bool = True
    relay_fallback: bool = True
    h: int = 1
    computes: int = 100
    force_check: bool = False
    trials: int = 1000
    lemma_n: int = 1024
    lemma_d: int = 2
    lemma_p: float = 0.25

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def resolved_quorum_size(self) -> int:
        return self.quorum_size if self.quorum_size is not None else default_quorum_size(self.n)

    def validate(self) -> None:
        for name in ("n", "m", "t", "h", "computes", "trials", "lemma_n", "lemma_d"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(name, f"must be an integer, got {value!r}")
        if self.n < 8:
            raise ConfigError("n", "need at least 8 parties")
        if self.m < self.n - 1:
            raise ConfigError("m", "need m >= n - 1 gates to consume every input")
        if self.t < 0:
            raise ConfigError("t", "must be non-negative")
        if self.t > (0.25 - self.epsilon) * self.n + 1e-9:
            raise ConfigError("t", f"t={self.t} exceeds the (1/4 - epsilon) * n = "
                                   f"{(0.25 - self.epsilon) * self.n:.2f} bound on bad parties")
        qs = self.resolved_quorum_size()
        if not 8 <= qs <= self.n:
            raise ConfigError("quorum_size", f"must be in [8, n], got {qs}")
        if not 0 < self.gamma < 0.5:
            raise ConfigError("gamma", "must be in (0, 1/2)")
        if not 0 < self.epsilon < 0.25:
            raise ConfigError("epsilon", "must be in (0, 1/4)")
        if self.strategy.upper() not in STRATEGIES:
            raise ConfigError("strategy", f"unknown strategy, choose from {sorted(STRATEGIES)}")
        if self.blame not in ("frame", "truthful", "silent"):
            raise ConfigError("blame", "must be frame, truthful or silent")
        if not 0 <= self.q <= 1:
            raise ConfigError("q", "must be a probability")
        if self.h < 1:
            raise ConfigError("h", "delay bound must be at least 1 round")
        if self.lemma_p < 0 or self.lemma_p * self.lemma_d >= 1:
            raise ConfigError("lemma_p", "need 0 <= p and p * d < 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def trial_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def binomial_ci(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


# -- Lemma 1 -----------------------------------------------------------------


def k_star(n: int, d: int, p: float) -> int:
    """Closed-form subgraph size whose tail probability is at most 1/2."""
    if p * d >= 1:
        raise ParameterViolation(f"PARAMETER_VIOLATION: p*d = {p * d} must be < 1")
    if 2 * p * n <= 1:
        return 1
    pd = p * d
    return max(1, math.ceil((1 + pd) / ((1 - pd) ** 2 * math.log2(math.e)) * math.log2(2 * p * n)))


def random_rdag(n: int, d: int, rng: np.random.Generator) -> list[list[int]]:
    """Random rooted DAG on ``n`` nodes with indegree at most ``d``.

    Node 0 is the root.  Nodes are added in order; each new node picks
    1..d out-neighbours uniformly among earlier nodes with spare indegree,
    so every node has a path to the root.  Returns in-neighbour lists.
    """
    preds: list[list[int]] = [[] for _ in range(n)]
    open_nodes = [0]
    counts = rng.integers(1, d + 1, size=n)
    coins = rng.random((n, d))
    for v in range(1, n):
        k = min(int(counts[v]), len(open_nodes))
        chosen = []
        for j in range(k):
            # draw without replacement by swapping picks to the tail
            idx = int(coins[v, j] * (len(open_nodes) - j))
            last = len(open_nodes) - 1 - j
            open_nodes[idx], open_nodes[last] = open_nodes[last], open_nodes[idx]
            chosen.append(open_nodes[last])
        for u in chosen:
            preds[u].append(v)
        for u in chosen:
            if len(preds[u]) >= d:
                i = open_nodes.index(u)
                open_nodes[i] = open_nodes[-1]
                open_nodes.pop()
        open_nodes.append(v)
    return preds


def max_rooted_surviving(preds: list[list[int]], alive) -> int:
    """Size of the largest rooted subgraph made only of surviving nodes."""
    alive = np.asarray(alive, dtype=bool)
    # a root with a surviving out-neighbour u is beaten by u, so only
    # survivors whose out-neighbours all died need trying
    has_live_succ = np.zeros(len(preds), dtype=bool)
    for u in np.flatnonzero(alive):
        for v in preds[u]:
            if alive[v]:
                has_live_succ[v] = True
    best = 0
    for root in np.flatnonzero(alive & ~has_live_succ):
        seen = {int(root)}
        stack = [int(root)]
        while stack:
            v = stack.pop()
            for u in preds[v]:
                if alive[u] and u not in seen:
                    seen.add(u)
                    stack.append(u)
        best = max(best, len(seen))
    return best


def max_rooted_brute_force(preds: list[list[int]], alive) -> int:
    """Exact oracle: try every subset of surviving nodes and every root."""
    nodes = [v for v, a in enumerate(alive) if a]
    for size in range(len(nodes), 0, -1):
        for subset in combinations(nodes, size):
            s = set(subset)
            for root in subset:
                # every member must reach root inside s
                reach = {root}
                frontier = [root]
                while frontier:
                    v = frontier.pop()
                    for u in preds[v]:
                        if u in s and u not in reach:
                            reach.add(u)
                            frontier.append(u)
                if reach == s:
                    return size
    return 0


def lemma1_trial(n: int, d: int, p: float, trials: int, seed: int = 0) -> dict:
    """Empirical P(max rooted surviving subgraph >= k*) over random R-DAGs."""
    if p < 0 or p * d >= 1:
        raise ParameterViolation(f"PARAMETER_VIOLATION: need 0 <= p and p*d < 1, got p*d = {p * d}")
    ks = k_star(n, d, p)
    rng = component_rng(seed, "lemma1")
    sizes = np.zeros(trials, dtype=np.int64)
    for k in range(trials):
        preds = random_rdag(n, d, rng)
        alive = rng.random(n) < p
        sizes[k] = max_rooted_surviving(preds, alive)
    hits = int((sizes >= ks).sum())
    return {
        "n": n, "d": d, "p": p, "trials": trials, "k_star": ks,
        "tail_count": hits, "tail_prob": hits / trials if trials else 0.0,
        "ci99": binomial_ci(hits, trials), "max_size": int(sizes.max(initial=0)),
        "mean_size": float(sizes.mean()) if trials else 0.0, "sizes": sizes,
    }


# -- protocol experiments -------------------------------------------------------


def make_simulation(cfg: RunConfig, seed: int, strategy=None, trace=None) -> Simulation:
    circuit = random_layered_circuit(cfg.n, cfg.m, cfg.depth, rng=component_rng(seed, "circuit"))
    graph = build_quorum_graph(circuit, cfg.n, cfg.resolved_quorum_size(), cfg.t,
                               rng=component_rng(seed, "quorums"), epsilon=cfg.epsilon,
                               gamma=cfg.gamma)
    if strategy is None:
        strategy = build_strategy(cfg, seed)
    return Simulation(circuit, graph, strategy, seed=seed, h=cfg.h, trace=trace)


def build_strategy(cfg: RunConfig, seed: int):
    name = cfg.strategy.upper()
    adv_seed = trial_seed(seed, 7919)
    if name == "CORRUPT_LEADER":
        return CorruptLeader(q=cfg.q, single=cfg.single, relay_fallback=cfg.relay_fallback,
                             blame=cfg.blame, seed=adv_seed)
    if name == "PASSIVE":
        return make_strategy(name, seed=adv_seed)
    return make_strategy(name, blame=cfg.blame, seed=adv_seed)


def random_inputs(sim: Simulation, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, sim.circuit.modulus, sim.circuit.n_inputs)


def detection_probability(cfg: RunConfig, trials: int | None = None, seed: int = 0) -> dict:
    """Fraction of forced CHECKs that detect a round-0 corruption.

    Each trial builds a fresh circuit, quorum graph and leaders.  Trials in
    which the adversary had no way to corrupt are reported but excluded
    from the rate.
    """
    trials = cfg.trials if trials is None else trials
    rows = []
    corrupted = detected = 0
    for k in range(trials):
        s = trial_seed(seed, k)
        sim = make_simulation(cfg, s)
        res = sim.compute(random_inputs(sim, component_rng(s, "inputs")), force_check=True)
        hit = bool(res.check.detected)
        if res.corrupted:
            corrupted += 1
            detected += hit
        rows.append({
            "experiment": "check-prob", "seed": s, "trial": k, "m": cfg.m, "n": cfg.n, "t": cfg.t,
            "strategy": cfg.strategy, "corrupted": int(res.corrupted), "detected": int(hit),
            "rounds": res.check.rounds, "dag0": (res.check.dag_sizes or [0])[0],
            "messages": res.metrics["messages"],
        })
    rate = detected / corrupted if corrupted else 0.0
    sigma = math.sqrt(0.25 / corrupted) if corrupted else float("inf")
    return {"trials": trials, "corrupted_trials": corrupted, "detected": detected, "rate": rate,
            "ci99": binomial_ci(detected, corrupted), "sigma_at_half": sigma, "rows": rows}


def long_run(cfg: RunConfig, L: int | None = None, seed: int = 0, after_quarantine: int | None = None,
             max_computes: int = 1_000_000, trace=None) -> dict:
    """Serialized COMPUTE calls with fresh inputs; per-call trajectory rows.

    With ``after_quarantine`` set, the run continues until every bad party
    is marked and then for that many more calls (``L`` is ignored).
    """
    L = cfg.computes if L is None else L
    if L < 1 and after_quarantine is None:
        raise ValueError("L must be at least 1")
    sim = make_simulation(cfg, seed, trace=trace)
    rng = component_rng(seed, "inputs")
    g = sim.graph
    rows = []
    quarantined_at = None
    step = potential_step(cfg.gamma)
    k = 0
    while True:
        if after_quarantine is None and k >= L:
            break
        if after_quarantine is not None and quarantined_at is not None and k >= quarantined_at + after_quarantine:
            break
        if k >= max_computes:
            break
        force = True if cfg.force_check else None
        res = sim.compute(random_inputs(sim, rng), force_check=force)
        b, gd = g.marked_counts()
        u = res.update
        rows.append({
            "experiment": "long-run", "seed": seed, "compute": k, "corrupted": int(res.corrupted),
            "triggered": int(res.triggered), "detected": int(bool(res.check and res.check.detected)),
            "update": u.status if u else "", "pairs": len(u.pairs) if u else 0,
            "convicted": len(u.convicted) if u else 0, "swept": len(u.swept) if u else 0,
            "f_before": round(u.potential_before, 9) if u else "",
            "f_after": round(u.potential_after, 9) if u else "",
            "marked_bad": b, "marked_good": gd,
            "messages": res.metrics["messages"], "operations": res.metrics["operations"],
            "latency": res.metrics["latency_rounds"],
            "cum_corruptions": sim.metrics.corrupted_outputs, "cum_updates": sim.metrics.update_calls,
        })
        if quarantined_at is None and g.all_bad_marked():
            quarantined_at = k + 1
        k += 1

    updates = [r for r in rows if r["update"]]
    steps = [r["f_after"] - r["f_before"] for r in updates]
    updates_to_quarantine = (rows[quarantined_at - 1]["cum_updates"] if quarantined_at else None)
    after = rows[quarantined_at:] if quarantined_at else []
    log_star = iterated_log(sim.circuit.n_nodes)
    summary = {
        "computes": len(rows), "t": cfg.t, "log_star": log_star,
        "corruptions": sim.metrics.corrupted_outputs, "updates": sim.metrics.update_calls,
        "messages": sim.metrics.messages, "operations": sim.metrics.operations,
        "latency_rounds": sim.metrics.latency_rounds,
        "marked_good_events": sim.metrics.marked_good, "marked_bad_events": sim.metrics.marked_bad,
        "quarantined_after_computes": quarantined_at,
        "updates_to_quarantine": updates_to_quarantine,
        "corruptions_after_quarantine": sum(r["corrupted"] for r in after),
        "computes_after_quarantine": len(after),
        "potential_step_required": step,
        "min_potential_step": min(steps) if steps else None,
        "updates_below_step": sum(1 for s in steps if s < step - 1e-9),
        "corruption_constant": (sim.metrics.corrupted_outputs / (cfg.t * log_star ** 2)
                                if cfg.t else 0.0),
    }
    return {"summary": summary, "rows": rows, "simulation": sim}


def message_cost(cfg: RunConfig, computes: int, seed: int = 0) -> dict:
    """Expected per-COMPUTE cost on a run: circuit + trigger, plus CHECK at its trigger rate."""
    sim = make_simulation(cfg, seed)
    rng = component_rng(seed, "inputs")
    circuit_msgs, latencies = [], []
    for _ in range(computes):
        res = sim.compute(random_inputs(sim, rng), force_check=False)
        if res.triggered:
            continue
        circuit_msgs.append(res.metrics["messages"])
        latencies.append(res.metrics["latency_rounds"])
    forced = sim.compute(random_inputs(sim, rng), force_check=True)
    check_msgs = forced.metrics["messages"] - float(np.mean(circuit_msgs))
    expected = float(np.mean(circuit_msgs)) + sim.trigger_probability() * check_msgs
    n, m = cfg.n, cfg.m
    scale = m + n * math.log2(n)
    return {"n": n, "m": m, "depth": sim.circuit.depth,
            "circuit_messages": float(np.mean(circuit_msgs)), "check_messages": check_msgs,
            "expected_messages": expected, "c": expected / scale,
            "latency": float(np.mean(latencies)), "latency_per_depth": float(np.mean(latencies)) / sim.circuit.depth}


# -- output ------------------------------------------------------------------


def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    header = list(rows[0])
    for r in rows[1:]:
        header.extend(k for k in r if k not in header)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
