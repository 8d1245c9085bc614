import random

import pytest
from hypothesis import given, settings, strategies as st

from cqdyn.model import (BOTTOM, Checkpoint, ConjunctiveQuery, Database, QuerySpecError, StarQuerySpec,
                         UpdateEvent, build_hypergraph, format_update_log, parse_query, parse_update_log,
                         primal_graph, result_digest, serialize_query, star_spec_of)
from cqdyn.workload import random_query


def test_rule_and_line_layouts_agree():
    rule = parse_query("Q(x3) <- R1(x1, x2), R2(x2, x3)")
    lines = parse_query("attrs: x1 x2 x3\noutput: x3\nR1(x1, x2)\nR2(x2, x3)\n")
    assert rule == lines
    assert rule.output == {2}


@pytest.mark.parametrize("text", [
    "Q(x) <- R(x), R(x)",
    "Q(y) <- R(x)",
    "R(x, x)",
    "attrs: a\nR(b)",
    "",
    "Q(x) <- R(x) <- S(x)",
])
def test_malformed_queries_are_rejected(text):
    with pytest.raises(QuerySpecError):
        parse_query(text)


def test_error_carries_position():
    with pytest.raises(QuerySpecError) as err:
        parse_query("attrs: x1\nattrs: x2\nR(x1)")
    assert err.value.line == 2


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_serialize_round_trip(seed):
    q = random_query(random.Random(seed))
    assert parse_query(serialize_query(q)) == q


def test_primal_graph_edges():
    q = parse_query("Q() <- R(a, b, c), S(c, d)")
    g = primal_graph(build_hypergraph(q))
    assert g.number_of_edges() == 4


def test_update_log_round_trip_with_bottom():
    text = "# gen=t seed=1\n+ R1 1 _ 3\n? 2 sha=abc\n- R2 _\n? true\n"
    log = parse_update_log(text)
    assert log.header == {"gen": "t", "seed": "1"}
    assert log.steps[0] == UpdateEvent("+", "R1", (1, BOTTOM, 3))
    assert log.steps[1] == Checkpoint(2, "abc")
    assert log.steps[3] == Checkpoint(True)
    assert parse_update_log(format_update_log(log)).steps == log.steps


def test_database_set_semantics():
    db = Database(arities={"R": 2})
    assert db.insert("R", (1, 2))
    assert not db.insert("R", (1, 2))
    assert not db.delete("R", (3, 4))
    with pytest.raises(ValueError):
        db.insert("R", (1,))
    with pytest.raises(KeyError):
        db.insert("S", (1,))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 5)), max_size=60))
def test_database_matches_a_plain_set(ops):
    db = Database(arities={"R": 1})
    model = set()
    for insert, v in ops:
        changed = db.apply(UpdateEvent("+" if insert else "-", "R", (v,)))
        assert changed == ((v,) not in model if insert else (v,) in model)
        (model.add if insert else model.discard)((v,))
    assert db["R"] == model


def test_result_digest_ignores_order():
    assert result_digest([(1, 2), (3, 4)]) == result_digest([(3, 4), (1, 2)])
    assert result_digest([]) != result_digest([()])


def test_star_spec_shape_and_recognition():
    spec = StarQuerySpec(4, 3, 3)
    q = spec.to_query()
    assert [r.name for r in q.relations] == ["R1", "R2", "R3", "R4"]
    assert star_spec_of(q) == spec
    assert star_spec_of(parse_query("Q(x1) <- R1(x1, x2), R2(x2)")) is None
    with pytest.raises(ValueError):
        StarQuerySpec(3, 1, 1)
    with pytest.raises(ValueError):
        StarQuerySpec(0, 0, 0)
