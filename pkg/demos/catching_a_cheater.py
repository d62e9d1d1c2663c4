import numpy as np

from selfheal import CorruptLeader, RunConfig
from selfheal.experiments import make_simulation, random_inputs

# 7 of 32 parties are bad; a bad gate leader adds one to what it forwards
cfg = RunConfig(n=32, m=64, t=7, quorum_size=16)
sim = make_simulation(cfg, seed=2, strategy=CorruptLeader(q=1.0, single=True, seed=2))
print("bad parties:", sorted(sim.graph.bad))

rng = np.random.default_rng(2)
res = sim.compute(random_inputs(sim, rng), force_check=True)
print("corrupted outputs so far:", sim.metrics.corrupted_outputs)

# The forced CHECK recomputes with fresh random checkers and sees the difference
print("check detected:", res.check.detected, "after", res.check.rounds, "rounds")

# UPDATE finds the conflicting pairs and marks both ends of each
upd = res.update
print("update status:", upd.status)
for pair in upd.pairs[:5]:
    print("  conflict", sorted(pair.parties), "bad in pair:", bool(pair.parties & sim.graph.bad))
print("newly marked bad:", sim.metrics.marked_bad, "good:", sim.metrics.marked_good)
print(f"potential {upd.potential_before:.3f} -> {upd.potential_after:.3f}")
