import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from cqdyn import analyzer
from cqdyn.model import parse_query, rule_text
from cqdyn.oracle import brute_chordless_lengths, brute_dimension, brute_height, brute_min_tree_height
from cqdyn.workload import random_free_connex_query, random_query

FIXTURES = Path(__file__).parent / "fixtures"


def load(name):
    return parse_query((FIXTURES / name).read_text())


@pytest.fixture(scope="module")
def running_example():
    return load("q1.query")


@pytest.fixture(scope="module")
def wide_query():
    return load("wide.query")


def test_running_example_chordless_path(running_example):
    w = analyzer.longest_chordless_path(running_example)
    assert w.length == 6
    assert set(running_example.names(w.vertices)) == {"x2", "x3", "x4", "x7", "x8"}
    assert analyzer.verify_chordless_witness(running_example, w) == []


def test_running_example_q_chordless_path(running_example):
    w = analyzer.longest_q_chordless_path(running_example)
    assert w.length == 3
    assert analyzer.verify_chordless_witness(running_example, w) == []


def test_running_example_dimension(running_example):
    rep = analyzer.dimension(running_example)
    assert rep.dimension == 4
    assert running_example.names(rep.connected_subset) == ["x5"]
    assert set(running_example.names(rep.keys)) == {"x3", "x4", "x6", "x9"}


def test_running_example_ears_and_residual(running_example):
    q = running_example
    ears = analyzer.find_ears(q, require_free_connex=False)
    assert set(q.rel_names(ears.ears)) == {"R1", "R6", "R8", "R9", "R10"}
    res = analyzer.residual_query(q, require_free_connex=False)
    assert rule_text(res) == ("Q(x3, x4, x9) <- R2(x2, x3), R3(x3, x4, x5, x6), R4(x4, x7),"
                              " R5(x7, x8), R7(x4, x5, x9)")
    with pytest.raises(analyzer.NotFreeConnex):
        analyzer.residual_query(q)


def test_wide_query_parameters(wide_query):
    assert analyzer.height(wide_query).height == 5
    assert analyzer.dimension(wide_query).dimension == 6
    assert analyzer.longest_chordless_path(wide_query).length == 9
    assert analyzer.classify(wide_query) == "cyclic"


def test_triangle_is_cyclic():
    q = load("triangle.query")
    assert analyzer.classify(q) == "cyclic"
    assert not analyzer.is_acyclic(q)


@pytest.mark.parametrize("text,expected", [
    ("Q(x1, x2) <- R1(x1, x2), R2(x1)", "q-hierarchical"),
    ("Q() <- R1(x1, x2), R2(x2, x3)", "q-hierarchical"),
    ("Q(x1) <- R1(x1, x2), R2(x2)", "weak-q-hierarchical"),
    ("Q(x1, x3) <- R1(x1, x2), R2(x2, x3)", "not-free-connex"),
])
def test_classification(text, expected):
    assert analyzer.classify(parse_query(text)) == expected


def test_small_dimension_examples():
    assert analyzer.dimension(parse_query("Q(x1) <- R1(x1, x2), R2(x2)")).dimension == 2
    assert analyzer.dimension(parse_query("Q(x1, x2) <- R1(x1, x2)")).dimension == 1
    assert analyzer.height(parse_query("Q(x2) <- R1(x1, x2), R2(x1, x2)")).height == 1


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**7))
def test_analyzer_agrees_with_brute_force(seed):
    q = random_query(random.Random(seed), max_attrs=7, max_rels=5)
    h = analyzer.height(q)
    assert (h.chordless_length, h.q_chordless_length) == brute_chordless_lengths(q)
    assert h.height == brute_height(q)
    assert analyzer.dimension(q).dimension == brute_dimension(q)
    assert analyzer.verify_chordless_witness(q, h.max_chordless) == []
    if h.max_q_chordless:
        assert analyzer.verify_chordless_witness(q, h.max_q_chordless) == []


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**7))
def test_q_hierarchical_iff_height_one_iff_dimension_one(seed):
    q = random_free_connex_query(random.Random(seed))
    qh = analyzer.is_q_hierarchical(q)
    assert qh == (analyzer.height(q).height == 1) == (analyzer.dimension(q).dimension == 1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**7))
def test_join_tree_is_valid_and_minimal(seed):
    q = random_free_connex_query(random.Random(seed), max_attrs=7, max_rels=5)
    tree = analyzer.build_free_connex_join_tree(q)
    verdict = analyzer.validate_join_tree(q, tree)
    assert verdict.problems == ()
    assert verdict.height == analyzer.tree_height(q) == brute_min_tree_height(q)


def test_join_tree_rejects_non_free_connex(running_example):
    with pytest.raises(analyzer.NotFreeConnex):
        analyzer.build_free_connex_join_tree(running_example)


def test_twin_relations_need_a_taller_tree():
    q = parse_query("Q(x5) <- R1(x1, x2), R2(x1, x2, x3, x4), R3(x2, x5)")
    assert analyzer.height(q).height == 2
    assert analyzer.tree_height(q) == 3 == brute_min_tree_height(q)


def test_report_is_stable(running_example):
    first = analyzer.render_report(running_example)
    assert first == analyzer.render_report(running_example)
    assert first.startswith("class=not-free-connex\nheight=3\n")
