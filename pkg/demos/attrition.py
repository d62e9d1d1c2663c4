from selfheal import RunConfig, long_run

# Every COMPUTE is checked, so every cheat triggers an UPDATE; watch the
# bad parties get marked one quorum at a time
cfg = RunConfig(n=32, m=64, t=7, quorum_size=16, force_check=True, relay_fallback=True)
out = long_run(cfg, seed=1, after_quarantine=50, max_computes=3000)

for r in out["rows"]:
    if r["update"]:
        print(f"compute {r['compute']}: marked bad={r['marked_bad']}, "
              f"good={r['marked_good']}, f={r['f_after']:.2f}")

s = out["summary"]
print("updates until every bad party was marked:", s["updates_to_quarantine"])
print("corruptions afterwards:", s["corruptions_after_quarantine"])
