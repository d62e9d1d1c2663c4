"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from selfheal.adversary import CorruptLeader, DeceptionDag, Drop, Equivocate
from selfheal.circuit import evaluate_ideal, random_layered_circuit
from selfheal.cli import run as cli_run
from selfheal.engine import component_rng
from selfheal.experiments import (
    RunConfig,
    detection_probability,
    k_star,
    lemma1_trial,
    long_run,
    make_simulation,
    max_rooted_brute_force,
    max_rooted_surviving,
    message_cost,
    random_inputs,
    random_rdag,
)
from selfheal.protocol import Simulation, potential_step
from selfheal.quorums import build_quorum_graph, default_quorum_size

pytestmark = pytest.mark.acceptance

VERDICTS: list[str] = []


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def test_c1_fault_free_correctness():
    start = time.perf_counter()
    rng = component_rng(1, "acceptance-c1")
    wrong = updates = runs = 0
    for k in range(100):
        n = int(rng.integers(8, 65))
        m = int(rng.integers(2 * n, 513))
        c = random_layered_circuit(n, m, rng=rng)
        g = build_quorum_graph(c, n, default_quorum_size(n), 0, rng=rng)
        sim = Simulation(c, g, seed=k)
        for _ in range(10):
            x = rng.integers(0, c.modulus, n)
            res = sim.compute(x)
            ideal = evaluate_ideal(c, x)
            wrong += sum(res.outputs[p] != ideal for p in range(n))
            runs += 1
        updates += sim.metrics.update_calls
    elapsed = time.perf_counter() - start
    ok = wrong == 0 and updates == 0 and elapsed < 60
    assert verdict(1, ok, f"{runs} computes, wrong outputs={wrong}, updates={updates}, "
                          f"{elapsed:.1f}s (< 60s)")


def test_c2_conflict_soundness():
    events = pairs = bad_free = 0
    seed = 0
    makers = [
        lambda s, b: CorruptLeader(q=1.0, single=True, relay_fallback=True, blame=b, seed=s),
        lambda s, b: CorruptLeader(q=0.3, blame=b, seed=s),
        lambda s, b: Equivocate(blame=b, seed=s),
        lambda s, b: Drop(blame=b, seed=s),
        lambda s, b: DeceptionDag(blame=b, seed=s),
    ]
    cfg = RunConfig(n=32, m=64, t=7, quorum_size=16)
    while events < 1000:
        for make in makers:
            for blame in ("frame", "truthful", "silent"):
                sim = make_simulation(cfg, seed, strategy=make(seed, blame))
                rng = component_rng(seed, "inputs")
                for _ in range(4):
                    res = sim.compute(random_inputs(sim, rng), force_check=True)
                    if res.update is None:
                        continue
                    events += 1
                    for pair in res.update.pairs:
                        pairs += 1
                        bad_free += not (pair.parties & sim.graph.bad)
                    bad_free += sum(p not in sim.graph.bad for p in res.update.convicted)
                seed += 1
    ok = bad_free == 0 and events >= 1000
    assert verdict(2, ok, f"{events} UPDATE events, {pairs} conflict pairs, "
                          f"pairs or convictions without a bad party={bad_free}")


@pytest.mark.parametrize("n,m", [(32, 64), (64, 256)])
def test_c3_check_detection(n, m):
    start = time.perf_counter()
    cfg = RunConfig(n=n, m=m, t=int((0.25 - 0.01) * n), strategy="DECEPTION_DAG")
    res = detection_probability(cfg, trials=1000, seed=3)
    # trials in which no bad leader existed carry no corruption and are excluded
    k = res["corrupted_trials"]
    sigma = math.sqrt(0.25 / k) if k else float("inf")
    ok = k >= 1000 * 0.9 and res["rate"] >= 0.5 - 3 * sigma
    elapsed = time.perf_counter() - start
    assert verdict(3, ok, f"m={m}: detected {res['detected']}/{k} corrupted trials, "
                          f"rate={res['rate']:.3f} >= {0.5 - 3 * sigma:.3f}, "
                          f"ci99=({res['ci99'][0]:.3f}, {res['ci99'][1]:.3f}), {elapsed:.0f}s")


def test_c4_lemma1_tail():
    start = time.perf_counter()
    assert k_star(1024, 2, 0.25) == 38
    res = lemma1_trial(1024, 2, 0.25, 10_000, seed=4)
    sigma = math.sqrt(0.25 / 10_000)
    rng = np.random.default_rng(44)
    mismatches = 0
    for _ in range(300):
        n = int(rng.integers(1, 13))
        preds = random_rdag(n, 2, rng)
        alive = rng.random(n) < rng.uniform(0.2, 0.9)
        mismatches += max_rooted_surviving(preds, alive) != max_rooted_brute_force(preds, alive)
    elapsed = time.perf_counter() - start
    ok = res["tail_prob"] <= 0.5 + 3 * sigma and mismatches == 0 and elapsed < 300
    assert verdict(4, ok, f"k*={res['k_star']}, P(size>=k*)={res['tail_prob']:.4f} "
                          f"(max size {res['max_size']}), brute-force mismatches={mismatches}, "
                          f"{elapsed:.0f}s")


@pytest.fixture(scope="module")
def attrition():
    cfg = RunConfig(n=64, m=128, t=15, quorum_size=16, gamma=0.01, strategy="CORRUPT_LEADER",
                    single=True, relay_fallback=True, blame="frame")
    start = time.perf_counter()
    out = long_run(cfg, seed=5, after_quarantine=1000, max_computes=15_000)
    out["elapsed"] = time.perf_counter() - start
    return out


def test_c5_attrition_update_bound(attrition):
    s = attrition["summary"]
    n_updates = s["updates_to_quarantine"]
    ok = n_updates is not None and n_updates <= 51 * 15 and attrition["elapsed"] < 600
    assert verdict("5a", ok, f"UPDATE calls before all 15 bad marked={n_updates} (<= 765), "
                             f"after {s['quarantined_after_computes']} computes, "
                             f"{attrition['elapsed']:.0f}s")


def test_c5_potential_step(attrition):
    s = attrition["summary"]
    rows = [r for r in attrition["rows"] if r["update"]]
    step = potential_step(0.01)
    low = [r for r in rows if r["f_after"] - r["f_before"] < step - 1e-9]
    swept = sum(1 for r in low if r["swept"])
    multi = sum(1 for r in low if not r["swept"] and r["pairs"] > 1)
    ok = not low
    assert verdict("5b", ok, f"f rose by >= {step:.4f} on {len(rows) - len(low)}/{len(rows)} "
                             f"UPDATEs; below: {len(low)} ({swept} with a sweep, {multi} with "
                             f"several pairs), min step {s['min_potential_step']}")


def test_c6_quarantine(attrition):
    s = attrition["summary"]
    ok = s["computes_after_quarantine"] >= 1000 and s["corruptions_after_quarantine"] == 0
    assert verdict(6, ok, f"{s['computes_after_quarantine']} computes after quarantine, "
                          f"corruptions={s['corruptions_after_quarantine']}")


def test_c7_message_cost():
    costs = [message_cost(RunConfig(n=n, m=m, t=0, strategy="PASSIVE"), computes=c, seed=7)
             for n, m, c in ((32, 128, 30), (64, 512, 15), (128, 2048, 6))]
    cs = [r["c"] for r in costs]
    lat = [r["latency_per_depth"] for r in costs]
    spread = max(cs) / min(cs)
    ok = spread < 2 and max(lat) <= 4
    detail = ", ".join(f"(n={r['n']}, m={r['m']}): c={r['c']:.0f}, latency/depth="
                       f"{r['latency_per_depth']:.2f}" for r in costs)
    assert verdict(7, ok, f"{detail}; c spread={spread:.2f} (< 2), latency <= 4*depth")


def test_c8_trigger_rate():
    cfg = RunConfig(n=32, m=64, t=0, strategy="PASSIVE")
    sim = make_simulation(cfg, 8)
    trials = 100_000
    hits = sum(sim.trigger_check()[0] for _ in range(trials))
    p = sim.trigger_probability()
    sigma = math.sqrt(p * (1 - p) / trials)
    ok = abs(hits / trials - p) <= 3 * sigma
    assert verdict(8, ok, f"{hits}/{trials} triggers, rate={hits / trials:.5f}, "
                          f"target 1/16={p:.5f}, 3 sigma={3 * sigma:.5f}")


def test_c9_determinism(tmp_path):
    commands = [
        ["simulate", "--n", "32", "--m", "64", "--t", "7", "--computes", "40", "--trace"],
        ["check-prob", "--n", "32", "--m", "64", "--t", "7", "--strategy", "DECEPTION_DAG",
         "--trials", "20"],
        ["lemma1", "--n", "1024", "--d", "2", "--p", "0.25", "--trials", "200"],
        ["long-run", "--n", "32", "--m", "64", "--t", "7", "--computes", "60"],
    ]
    identical = True
    for k, cmd in enumerate(commands):
        dirs = [tmp_path / f"{k}-{rep}" for rep in range(2)]
        for d in dirs:
            assert cli_run(cmd + ["--seed", "9", "--out", str(d)]) == 0
        for f in sorted(p.name for p in dirs[0].iterdir()):
            identical &= (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
    assert verdict(9, identical, f"{len(commands)} subcommands run twice, result files "
                                 f"{'byte-identical' if identical else 'differ'}")
