import numpy as np
import pytest

from selfheal.experiments import (
    ConfigError,
    ParameterViolation,
    RunConfig,
    binomial_ci,
    detection_probability,
    k_star,
    lemma1_trial,
    long_run,
    max_rooted_brute_force,
    max_rooted_surviving,
    random_rdag,
)


@pytest.mark.parametrize("n,d,p,expected", [
    (1024, 2, 0.25, 38),
    (1024, 2, 0.45, 1297),
    (12, 2, 0.3, 20),
    (100, 3, 0.2, 37),
])
def test_k_star_frozen(n, d, p, expected):
    # values computed once from the closed form with a hand calculator script
    assert k_star(n, d, p) == expected


def test_k_star_rejects_supercritical():
    with pytest.raises(ParameterViolation):
        k_star(100, 2, 0.5)
    with pytest.raises(ParameterViolation):
        lemma1_trial(100, 2, 0.6, 1)


def test_zero_survival():
    res = lemma1_trial(256, 2, 0.0, 50, seed=1)
    assert res["max_size"] == 0 and res["tail_count"] == 0


def test_full_survival_is_whole_graph():
    rng = np.random.default_rng(0)
    preds = random_rdag(40, 2, rng)
    assert max_rooted_surviving(preds, np.ones(40, dtype=bool)) == 40


def test_rdag_shape():
    rng = np.random.default_rng(3)
    preds = random_rdag(500, 2, rng)
    assert max(len(p) for p in preds) <= 2
    succ = [[] for _ in range(500)]
    for u, ps in enumerate(preds):
        for v in ps:
            assert v > u
            succ[v].append(u)
    assert all(succ[v] for v in range(1, 500))


@pytest.mark.parametrize("seed", range(20))
def test_brute_force_small(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    preds = random_rdag(n, 2, rng)
    alive = rng.random(n) < 0.5
    assert max_rooted_surviving(preds, alive) == max_rooted_brute_force(preds, alive)


def test_lemma1_reproducible():
    a = lemma1_trial(128, 2, 0.25, 30, seed=4)
    b = lemma1_trial(128, 2, 0.25, 30, seed=4)
    assert (a["sizes"] == b["sizes"]).all()


def test_binomial_ci_brackets():
    lo, hi = binomial_ci(50, 100)
    assert lo < 0.5 < hi
    assert binomial_ci(0, 0) == (0.0, 1.0)


def test_config_validation():
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict({"n": 64, "t": 32})
    assert err.value.field == "t" and "1/4" in str(err.value)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"strategy": "NOPE"})
    assert RunConfig.from_dict({"n": 32, "m": 64, "t": 7}).resolved_quorum_size() == 20


def test_passive_detection_is_vacuous():
    cfg = RunConfig(n=32, m=64, t=7, strategy="PASSIVE")
    res = detection_probability(cfg, trials=3, seed=0)
    assert res["corrupted_trials"] == 0 and res["rate"] == 0.0


def test_fault_free_long_run():
    cfg = RunConfig(n=32, m=64, t=0, strategy="PASSIVE")
    res = long_run(cfg, L=20, seed=2)
    s = res["summary"]
    assert s["corruptions"] == 0 and s["updates"] == 0
    assert len(res["rows"]) == 20
