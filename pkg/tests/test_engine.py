import random

import pytest
from hypothesis import given, settings, strategies as st

from cqdyn.engine import EngineConfig, HIndexTracker, StarEngine, definitional_h, integer_root
from cqdyn.model import StarQuerySpec, UpdateEvent
from cqdyn.oracle import eval_star_naive

from star_fixture import A, B, C, D, SPEC, X, Y, center_rows, fresh, loaded_engine, populate_satellites


def random_stream(spec, n, domain, rng):
    names = [spec.center] + spec.satellites
    for _ in range(n):
        name = rng.choice(names)
        arity = spec.d if name == spec.center else 1
        yield UpdateEvent(rng.choice("++-"), name, tuple(rng.randrange(domain) for _ in range(arity)))


@pytest.mark.parametrize("d,k,j", [(1, 1, 1), (2, 2, 1), (3, 3, 0), (3, 2, 2), (4, 3, 3)])
def test_engine_matches_oracle_on_random_streams(d, k, j):
    spec = StarQuerySpec(d, k, j)
    rng = random.Random(d * 100 + k * 10 + j)
    eng = StarEngine(spec)
    for n, ev in enumerate(random_stream(spec, 1500, 6, rng)):
        eng.apply(ev)
        if n % 100 == 0:
            assert eng.results() == eval_star_naive(eng.database(), spec)
            assert eng.check_consistency() == []
    assert eng.results() == eval_star_naive(eng.database(), spec)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 3), st.tuples(st.integers(0, 4), st.integers(0, 4))),
                max_size=120))
def test_engine_invariants_hold_after_every_prefix(ops):
    spec = StarQuerySpec(2, 2, 1)
    eng = StarEngine(spec)
    for insert, target, (a, b) in ops:
        if target < 2:
            ev = UpdateEvent("+" if insert else "-", "R1", (a, b))
        else:
            ev = UpdateEvent("+" if insert else "-", spec.satellite(target - 2), (a,))
        eng.apply(ev)
        assert eng.check_h() == []
    assert eng.results() == eval_star_naive(eng.database(), spec)
    assert eng.check_consistency() == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), max_size=200), st.integers(1, 4))
def test_h_tracker_equals_definition(moves, d):
    tr = HIndexTracker(d)
    for up, v in moves:
        if up:
            tr.increment(v)
        elif v in tr.degree:
            tr.decrement(v)
        assert tr.h == definitional_h(tr.degree.values(), d)


def test_definitional_h_examples():
    assert definitional_h([], 3) == 0
    assert definitional_h([4, 4, 4], 2) == 3
    n = 3
    assert definitional_h([n ** 2] * n, 3) == n
    assert integer_root(27, 3) == 3 and integer_root(26, 3) is None


def test_duplicate_insert_and_absent_delete_are_noops():
    eng = StarEngine(StarQuerySpec(2, 2, 0))
    eng.apply(UpdateEvent("+", "R1", (1, 2)))
    before = eng.metrics()
    s = eng.apply(UpdateEvent("+", "R1", (1, 2)))
    assert not s.changed and s.cost.ops <= 2
    s = eng.apply(UpdateEvent("-", "R2", (9,)))
    assert not s.changed
    assert eng.metrics().noops == before.noops + 2


def test_arity_errors():
    eng = StarEngine(StarQuerySpec(2, 1, 1))
    with pytest.raises(ValueError):
        eng.apply(UpdateEvent("+", "R1", (1,)))
    with pytest.raises(ValueError):
        eng.apply(UpdateEvent("+", "R2", (1, 2)))
    with pytest.raises(ValueError):
        StarEngine(StarQuerySpec(9, 1, 1))


def test_empty_satellite_annihilates_and_boolean_collapses():
    spec = StarQuerySpec(3, 3, 0)
    eng = StarEngine(spec)
    eng.apply(UpdateEvent("+", "R1", (1, 2, 3)))
    assert eng.results() == set()
    for i, v in enumerate((1, 2, 3)):
        eng.apply(UpdateEvent("+", spec.satellite(i), (v,)))
    assert eng.results() == {()}


def test_degenerate_dimension_one_has_constant_cost():
    spec = StarQuerySpec(1, 1, 1)
    eng = StarEngine(spec)
    rng = random.Random(5)
    worst = 0
    for ev in random_stream(spec, 5000, 50, rng):
        worst = max(worst, eng.apply(ev).cost.ops)
    assert worst <= 3
    assert eng.metrics().rebuilds == 0
    assert eng.current_tau(0) == 1


def test_uniform_degree_one_data_never_rebuilds():
    spec = StarQuerySpec(3, 3, 0)
    eng = StarEngine(spec)
    for n in range(3000):
        eng.apply(UpdateEvent("+", "R1", (n, n, n)))
    assert eng.metrics().rebuilds <= 1  # the first rebuild fixes h from 0 to 1
    assert eng.current_h()[0] == 1


def test_max_h_on_grid_instance():
    n, d = 3, 3
    eng = StarEngine(StarQuerySpec(d, d, 0))
    rows = [(a, b, c) for a in range(n) for b in range(n) for c in range(n)]
    for t in rows:
        eng.apply(UpdateEvent("+", "R1", t))
    assert eng.current_h()[0] == n


def test_engine_config_parse():
    cfg = EngineConfig.parse("max_d=4, promote_factor=3 instrument=off")
    assert cfg.max_d == 4 and cfg.promote_factor == 3.0 and cfg.instrument is False
    with pytest.raises(ValueError):
        EngineConfig.parse("bogus=1")


def test_oscillation_inside_band_never_reclassifies():
    eng, rows = loaded_engine()
    base = eng.metrics().reclassifications
    extra = [(C, Y, fresh(), fresh()) for _ in range(5)]
    for _ in range(20):
        for t in extra:
            eng.apply(UpdateEvent("+", "R1", t))
        for t in extra:
            eng.apply(UpdateEvent("-", "R1", t))
    assert eng.metrics().reclassifications == base


# -- the 80-tuple four-dimensional instance -------------------------------


def test_loaded_instance_thresholds():
    eng, _ = loaded_engine()
    assert eng.current_h()[0] == 2
    assert eng.current_tau(0) == 27
    assert eng.heavy_keys(0) == {A, B}
    assert eng.heavy_keys(1) == {X, Y}


def test_light_satellite_insert_scans_ten_tuples():
    eng, rows = loaded_engine()
    populate_satellites(eng, rows)
    s = eng.apply(UpdateEvent("+", "R2", (C,)))
    assert s.cost.center_scanned == 10
    assert 10 <= s.cost.ops <= 10 * 3


def test_heavy_satellite_insert_skips_center():
    eng, rows = loaded_engine()
    populate_satellites(eng, rows)
    s = eng.apply(UpdateEvent("+", "R2", (A,)))
    assert s.cost.center_scanned == 0
    assert s.cost.heavy_entries <= 8
    assert eng.results() == eval_star_naive(eng.database(), SPEC)


def test_center_insert_is_constant():
    eng, rows = loaded_engine()
    populate_satellites(eng, rows)
    costs = [eng.apply(UpdateEvent("+", "R1", (fresh(), fresh(), fresh(), fresh()))).cost.ops for _ in range(50)]
    assert max(costs) <= 2 + SPEC.d


def test_demotion_after_seventeen_deletions():
    eng, rows = loaded_engine()
    a_rows = [t for t in rows if t[0] == A]
    moved_at = None
    for n, t in enumerate(a_rows[:17], start=1):
        s = eng.apply(UpdateEvent("-", "R1", t))
        if s.reclassified:
            moved_at = (n, s.cost.moved)
    assert moved_at == (17, 13)
    assert A not in eng.heavy_keys(0)
    assert eng.check_consistency() == []


def test_promotions_then_single_rebuild():
    eng, _ = loaded_engine()
    rebuilds = eng.metrics().rebuilds
    d_moves = [eng.apply(UpdateEvent("+", "R1", (D, fresh(), fresh(), fresh()))) for _ in range(54)]
    assert d_moves[-1].reclassified == ((0, D),) and d_moves[-1].cost.moved == 55
    assert D in eng.heavy_keys(0)
    assert eng.metrics().rebuilds == rebuilds
    c_moves = [eng.apply(UpdateEvent("+", "R1", (C, fresh(), fresh(), fresh()))) for _ in range(45)]
    assert [s.rebuilt for s in c_moves].count(True) == 1 and c_moves[-1].rebuilt
    assert eng.metrics().rebuilds == rebuilds + 1
    assert eng.current_h()[1][0] == 3
    assert eng.current_tau(0) == 64
    assert eng.heavy_keys(0) == frozenset()
    assert eng.heavy_keys(1) == {X, Y}
    last = c_moves[-1].cost
    assert last.rebalance_ops >= 2 * last.moved
    assert eng.check_consistency() == []
