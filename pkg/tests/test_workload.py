import random
from pathlib import Path

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from cqdyn import analyzer
from cqdyn.engine import StarEngine
from cqdyn.model import BOTTOM, Checkpoint, StarQuerySpec, UpdateEvent, parse_query
from cqdyn.oracle import BoolTensor, detect_k_cycle_brute, oumv_brute
from cqdyn import workload as wl

FIXTURES = Path(__file__).parent / "fixtures"


def q1():
    return parse_query((FIXTURES / "q1.query").read_text())


def wide():
    return parse_query((FIXTURES / "wide.query").read_text())


def test_oumv_star_checkpoints_match_tensor_oracle():
    rng = random.Random(3)
    m = BoolTensor.random(3, 8, 0.05, rng)
    rounds = wl.random_rounds(8, 3, 20, rng, 0.3)
    script = wl.encode_oumv_star(m, rounds, StarQuerySpec(3, 3, 0))
    cps = script.checkpoints()
    assert [c.expected for c in cps] == [oumv_brute(m, r) for r in rounds]
    assert all(wl.checkpoint_holds(c, rows) for c, rows in zip(cps, wl.replay_oracle(script)))


def test_oumv_star_trivial_cases():
    spec = StarQuerySpec(2, 2, 0)
    empty = wl.encode_oumv_star(BoolTensor.from_entries(2, 3, []), [({0, 1}, {2})] * 3, spec)
    assert [c.expected for c in empty.checkpoints()] == [False] * 3
    single = wl.encode_oumv_star(BoolTensor.from_entries(2, 3, [(0, 0)]), [({0}, {0})], spec)
    assert single.checkpoints()[0].expected is True
    with pytest.raises(ValueError):
        wl.encode_oumv_star(BoolTensor.from_entries(3, 3, []), [], spec)


def test_oumv_star_with_output_dimensions_uses_filters():
    rng = random.Random(8)
    spec = StarQuerySpec(3, 1, 2)
    m = BoolTensor.random(3, 4, 0.2, rng)
    rounds = wl.random_rounds(4, 3, 10, rng)
    script = wl.encode_oumv_star(m, rounds, spec)
    answers = wl.replay_oracle(script)
    assert [bool(a) for a in answers] == [oumv_brute(m, r) for r in rounds]


def test_general_encoding_reproduces_the_worked_mapping():
    q = q1()
    rep = analyzer.dimension(q)
    mp = wl.oumv_mapping(q, rep)
    assert q.names(mp.dims) == ["x3", "x4", "x6", "x9"]
    fed = {i: q.rel_names(rids) for i, rids in mp.vector_relations.items()}
    assert fed == {0: ["R2"], 1: ["R4"], 2: ["R8"], 3: ["R10"]}
    assert set(q.rel_names(mp.neutral)) == {"R1", "R5", "R6"}
    assert set(q.rel_names(mp.projected)) == {"R3", "R7", "R9"}
    m = BoolTensor.from_entries(4, 4, [(1, 2, 3, 0)])
    script = wl.encode_oumv_general(q, rep, m, [({1}, {2}, {3}, {0})])
    ev = list(script.events())
    assert UpdateEvent("+", "R4", (2, BOTTOM)) in ev
    assert UpdateEvent("+", "R2", (BOTTOM, 1)) in ev
    assert UpdateEvent("+", "R3", (1, 2, 0, 3)) in ev
    assert script.checkpoints()[0].expected is True


def test_general_encoding_empty_tensor_is_always_false():
    q = q1()
    script = wl.encode_oumv_general(q, analyzer.dimension(q), BoolTensor.from_entries(4, 4, []),
                                    wl.random_rounds(4, 4, 4, random.Random(1)))
    assert [c.expected for c in script.checkpoints()] == [False] * 4


def test_general_encoding_with_extra_outputs():
    q = wide()
    rep = analyzer.dimension(q)
    rng = random.Random(2)
    m = BoolTensor.random(6, 2, 0.3, rng)
    rounds = wl.random_rounds(2, 6, 6, rng)
    script = wl.encode_oumv_general(q, rep, m, rounds)
    assert script.filters
    assert [bool(a) for a in wl.replay_oracle(script)] == [oumv_brute(m, r) for r in rounds]


def test_general_encoding_rejects_inconsistent_report():
    q = q1()
    rep = analyzer.dimension(q)
    with pytest.raises(ValueError):
        wl.encode_oumv_general(q, rep, BoolTensor.from_entries(3, 2, []), [])
    other = analyzer.dimension(parse_query("Q(x1) <- R1(x1, x2), R2(x2)"))
    with pytest.raises(ValueError):
        wl.encode_oumv_general(q, other, BoolTensor.from_entries(other.dimension, 2, []), [])


def test_trial_count_default():
    assert wl.default_trials(3) == 21
    assert wl.default_trials(5) == 120


def test_triangle_detected_and_scripts_replay():
    g = nx.DiGraph([(0, 1), (1, 2), (2, 0)])
    scripts = wl.encode_cycle(g, 3, 50, "odd-path", seed=4)
    assert any(c.expected for s in scripts for c in s.checkpoints())
    for s in scripts[:60]:
        assert [c.expected for c in s.checkpoints()] == wl.replay_cycle_script(s)


def test_intersection_variant_replays():
    g = wl.random_digraph(8, 14, 3)
    for s in wl.encode_cycle(g, 5, 2, "intersection", seed=1):
        assert s.companion is not None
        assert [c.expected for c in s.checkpoints()] == wl.replay_cycle_script(s)


def test_even_variant_on_four_cycle():
    g = nx.DiGraph([(0, 1), (1, 2), (2, 3), (3, 0)])
    assert wl.detect_cycle_colorcoding(g, 4, seed=2)
    with pytest.raises(ValueError):
        wl.encode_cycle(g, 4, 1, "odd-path")


def test_dag_never_reports_a_cycle():
    for seed in range(5):
        g = wl.random_dag(15, 30, seed)
        scripts = wl.encode_cycle(g, 3, 5, seed=seed)
        assert not any(c.expected for s in scripts for c in s.checkpoints())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([3, 4, 5]))
def test_true_checkpoint_implies_a_real_cycle(seed, length):
    g = wl.random_digraph(9, 12, seed)
    if wl.detect_cycle_colorcoding(g, length, trials=3, seed=seed):
        assert detect_k_cycle_brute(g, length)


def lift_case(q, w, seed, events=40):
    layout = wl.path_layout(q, w)
    inner = wl.gen_path_script(layout.inner, events, 3, seed)
    return inner, wl.lift_path_updates(q, w, inner)


@pytest.mark.parametrize("make", [q1, wide])
def test_lift_preserves_answers(make):
    q = make()
    h = analyzer.height(q)
    for w in (h.max_chordless, h.max_q_chordless):
        inner, lifted = lift_case(q, w, 11)
        assert [c.expected for c in lifted.checkpoints()] == [c.expected for c in inner.checkpoints()]
        assert [len(r) for r in wl.replay_oracle(lifted)] == [len(r) for r in wl.replay_oracle(inner)]


def test_lift_of_empty_script_is_preload_only():
    q = q1()
    w = analyzer.longest_chordless_path(q)
    layout = wl.path_layout(q, w)
    lifted = wl.lift_path_updates(q, w, wl.WorkloadScript(layout.inner))
    assert all(ev.tuple == (BOTTOM,) * len(ev.tuple) for ev in lifted.events())
    # R7 and R9 touch one interior attribute whose domain is empty
    assert {ev.relation for ev in lifted.events()} == {"R8", "R10"}


def test_lift_rejects_mismatched_inner():
    q = q1()
    w = analyzer.longest_chordless_path(q)
    with pytest.raises(ValueError):
        wl.lift_path_updates(q, w, wl.WorkloadScript(wl.path_query(4)))


def test_gen_random_is_deterministic_and_sound():
    spec = StarQuerySpec(3, 2, 1)
    a = wl.gen_random(spec, 500, 20, "zipf:1.2", seed=9)
    b = wl.gen_random(spec, 500, 20, "zipf:1.2", seed=9)
    assert a.to_text() == b.to_text()
    assert all(wl.checkpoint_holds(c, r) for c, r in zip(a.checkpoints(), wl.replay_oracle(a)))
    parsed = wl.WorkloadScript.from_text(a.to_text())
    assert parsed.to_text() == a.to_text()


def test_gen_random_empty():
    script = wl.gen_random(StarQuerySpec(2, 2, 1), 0, 10)
    assert script.steps == [Checkpoint(0, script.checkpoints()[0].digest)]


def test_uniform_stream_keeps_h_low():
    spec = StarQuerySpec(3, 3, 0)
    script = wl.gen_random(spec, 10**4, 10**4, "uniform", seed=1, oracle=False)
    eng = StarEngine(spec)
    peak = 0
    for ev in script.events():
        eng.apply(ev)
        peak = max(peak, eng.current_h()[0])
    assert peak <= 2


def test_zipf_stream_drives_h_up():
    spec = StarQuerySpec(3, 3, 0)
    script = wl.gen_random(spec, 10**4, 10**4, "zipf:1.2", seed=1, oracle=False)
    eng = StarEngine(spec)
    trail = []
    for n, ev in enumerate(script.events(), start=1):
        eng.apply(ev)
        if n % 2000 == 0:
            trail.append((len(eng.center), eng.current_h()[0]))
    assert trail[-1][1] > trail[0][1] >= 3
    size, h = trail[-1]
    assert h <= size ** (1 / 3)
