import numpy as np

from selfheal import k_star, lemma1_trial

# Keep each node of a random DAG with probability p and measure the largest
# rooted subgraph that survives; beyond k* it should be rare
for n, d, p in [(1024, 2, 0.25), (1024, 2, 0.1), (1024, 3, 0.2)]:
    res = lemma1_trial(n, d, p, trials=2000, seed=0)
    sizes = np.asarray(res["sizes"])
    print(f"n={n} d={d} p={p}: k*={k_star(n, d, p)}, "
          f"mean={sizes.mean():.2f}, max={sizes.max()}, P(size>=k*)={res['tail_prob']:.4f}")
