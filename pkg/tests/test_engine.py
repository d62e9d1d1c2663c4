import json

from selfheal.broadcast import Envelope
from selfheal.engine import JsonlTrace, Metrics, RoundSchedule, component_rng, step_round


class Rewriter:
    def act(self, bad, good, ctx):
        # rushing: copy the first good payload of this round into every bad message
        seen = good[0].payload if good else 0
        return [e.rewrite(seen) for e in bad]


class Dropper:
    def act(self, bad, good, ctx):
        return []


def test_rushing_sees_good_first():
    sched = RoundSchedule()
    sched.send(Envelope("V", 10, 0, 0, 1))
    sched.send(Envelope("V", 99, 0, 5, 1))
    m = Metrics()
    delivered = step_round(sched, lambda p: p == 5, Rewriter(), m)
    payloads = {e.sender: e.payload for e in delivered}
    assert payloads == {0: 10, 5: 10}
    assert m.messages == 2 and m.latency_rounds == 1


def test_suppression_counted():
    sched = RoundSchedule()
    sched.send(Envelope("V", 1, 0, 5, 1))
    m = Metrics()
    assert step_round(sched, lambda p: p == 5, Dropper(), m) == []
    assert sched.suppressed == 1 and m.messages == 0


def test_charged_once():
    sched = RoundSchedule()
    env = Envelope("V", 1, 0, 0, 1, charged=True)
    sched.send(env)
    m = Metrics()
    step_round(sched, lambda p: False, None, m)
    assert m.messages == 0


def test_component_streams_independent():
    a1 = component_rng(3, "elect").random(5)
    a2 = component_rng(3, "elect").random(5)
    b = component_rng(3, "trigger").random(5)
    assert (a1 == a2).all() and not (a1 == b).all()


def test_metrics_delta():
    m = Metrics()
    snap = m.snapshot()
    m.messages += 4
    assert m.delta(snap)["messages"] == 4


def test_trace_lines(tmp_path):
    path = tmp_path / "t.jsonl"
    trace = JsonlTrace(path)
    sched = RoundSchedule(trace=trace)
    sched.send(Envelope("V", 1, 0, 0, 1, slot=3))
    step_round(sched, lambda p: False, None, Metrics())
    trace.close()
    rec = json.loads(path.read_text().splitlines()[0])
    assert rec["slot"] == 3 and rec["corrupted"] is False
