"""Update-script generators.

Every script carries its expected answers, computed by an oracle when the
script is generated, so replaying it needs only the engine under test.
Generators are pure functions of their parameters and seed.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from . import analyzer
from .model import (BOTTOM, Checkpoint, ConjunctiveQuery, Database, Step, StarQuerySpec, UpdateEvent,
                    UpdateLog, format_update_log, parse_query, parse_update_log, result_digest,
                    serialize_query, star_spec_of)
from .oracle import BoolTensor, eval_acyclic_naive, eval_star_naive, oumv_brute

Row = Tuple[int, ...]
# checkpoint index -> output position -> allowed values
Filters = Dict[int, Dict[int, FrozenSet[int]]]


@dataclass
class WorkloadScript:
    query: ConjunctiveQuery
    steps: List[Step] = field(default_factory=list)
    meta: Dict[str, str] = field(default_factory=dict)
    filters: Filters = field(default_factory=dict)
    companion: Optional["WorkloadScript"] = None

    @property
    def star(self) -> Optional[StarQuerySpec]:
        return star_spec_of(self.query)

    def events(self) -> Iterator[UpdateEvent]:
        return (s for s in self.steps if isinstance(s, UpdateEvent))

    def checkpoints(self) -> List[Checkpoint]:
        return [s for s in self.steps if isinstance(s, Checkpoint)]

    def to_text(self) -> str:
        log = UpdateLog(dict(self.meta), serialize_query(self.query).splitlines(), list(self.steps))
        text = format_update_log(log)
        for idx in sorted(self.filters):
            parts = ";".join(f"{pos}:{','.join(map(str, sorted(vals)))}"
                             for pos, vals in sorted(self.filters[idx].items()))
            text += f"#filter {idx} {parts}\n"
        return text

    @classmethod
    def from_text(cls, text: str) -> "WorkloadScript":
        log = parse_update_log(text)
        if not log.query_lines:
            raise ValueError("script has no '#q' query lines")
        filters: Filters = {}
        for raw in text.splitlines():
            if raw.startswith("#filter "):
                _, idx, body = raw.split(" ", 2)
                entry: Dict[int, FrozenSet[int]] = {}
                for part in body.strip().split(";"):
                    if not part:
                        continue
                    pos, vals = part.split(":", 1)
                    entry[int(pos)] = frozenset(int(v) for v in vals.split(",") if v)
                filters[int(idx)] = entry
        return cls(parse_query("\n".join(log.query_lines)), log.steps, log.header, filters)


def apply_filter(rows: Iterable[Row], filt: Optional[Dict[int, FrozenSet[int]]]) -> Set[Row]:
    if not filt:
        return set(rows)
    return {r for r in rows if all(r[p] in allowed for p, allowed in filt.items())}


def checkpoint_holds(cp: Checkpoint, rows: Set[Row]) -> bool:
    """Compare a result set with a checkpoint's expectation."""
    if isinstance(cp.expected, bool):
        if bool(rows) != cp.expected:
            return False
    elif cp.expected is not None and len(rows) != cp.expected:
        return False
    return cp.digest is None or cp.digest == result_digest(rows)


def replay_oracle(script: WorkloadScript, cap: int = 10**7) -> List[Set[Row]]:
    """Replay a script into a plain database and evaluate the query at
    every checkpoint (filters applied)."""
    db = Database(script.query)
    spec = script.star
    answers = []
    for s in script.steps:
        if isinstance(s, UpdateEvent):
            db.apply(s)
        else:
            rows = eval_star_naive(db, spec) if spec else eval_acyclic_naive(db, script.query, cap)
            answers.append(apply_filter(rows, script.filters.get(len(answers))))
    return answers


# ---------------------------------------------------------------------------
# random queries


def random_query(rng: random.Random, max_attrs: int = 8, max_rels: int = 6) -> ConjunctiveQuery:
    """A random connected-ish query: each new relation shares some
    attributes of an earlier one and adds up to two fresh ones."""
    while True:
        pool = [f"x{i + 1}" for i in range(max_attrs)]
        used: List[str] = []
        rels: List[Tuple[str, List[str]]] = []
        for _ in range(rng.randint(1, max_rels)):
            if rels and rng.random() < 0.85:
                parent = rng.choice(rels)[1]
                share = [a for a in parent if rng.random() < 0.5] or [rng.choice(parent)]
            else:
                share = []
            fresh = [a for a in pool if a not in used][:rng.randint(0 if share else 1, 2)]
            used += fresh
            attrs = share + fresh
            if not attrs and used:
                attrs = [rng.choice(used)]
            if attrs:
                rels.append((f"R{len(rels) + 1}", attrs))
        if not rels:
            continue
        out = [a for a in used if rng.random() < 0.4]
        return ConjunctiveQuery.build(rels, out)


def random_free_connex_query(rng: random.Random, max_attrs: int = 8, max_rels: int = 6) -> ConjunctiveQuery:
    while True:
        q = random_query(rng, max_attrs, max_rels)
        if analyzer.is_free_connex(q):
            return q


# ---------------------------------------------------------------------------
# OuMv encodings


def random_rounds(side: int, order: int, count: int, rng: random.Random,
                  density: float = 0.5) -> List[Tuple[FrozenSet[int], ...]]:
    return [tuple(frozenset(c for c in range(side) if rng.random() < density) for _ in range(order))
            for _ in range(count)]


def encode_oumv_star(m: BoolTensor, rounds: Sequence[Sequence[Iterable[int]]],
                     spec: StarQuerySpec, seed: Optional[int] = None) -> WorkloadScript:
    """Tensor support into the center, then per round: vector entries into
    the satellites, a yes/no checkpoint, and the matching deletions.

    Dimensions without a satellite are output positions; their vectors
    become checkpoint filters.
    """
    if spec.d != m.order:
        raise ValueError(f"tensor order {m.order} does not match star dimension {spec.d}")
    meta = {"gen": "oumv-star", "seed": str(seed), "n": str(m.side), **spec.header()}
    script = WorkloadScript(spec.to_query(), meta=meta)
    steps = script.steps
    steps.extend(UpdateEvent("+", spec.center, e) for e in m.entries)
    lo = spec.d - spec.j
    for idx, vectors in enumerate(rounds):
        vs = [sorted(set(v)) for v in vectors]
        if len(vs) != m.order:
            raise ValueError(f"round has {len(vs)} vectors, expected {m.order}")
        inserts = [UpdateEvent("+", spec.satellite(i), (c,)) for i in range(spec.k) for c in vs[i]]
        steps.extend(inserts)
        if spec.k < spec.d:
            script.filters[idx] = {
                i - lo: frozenset(vs[i]) for i in range(spec.k, spec.d)}
        steps.append(Checkpoint(oumv_brute(m, vs)))
        steps.extend(UpdateEvent("-", e.relation, e.tuple) for e in inserts)
    return script


@dataclass(frozen=True)
class OumvMapping:
    """How tensor dimensions land on query attributes."""
    dims: Tuple[int, ...]                     # attribute per tensor dimension
    glue: FrozenSet[int]                      # attributes carrying entry ids
    vector_relations: Dict[int, Tuple[int, ...]]  # dimension -> relations fed by its vector
    output_dims: Dict[int, int]               # dimension -> output position (filtered)
    projected: Tuple[int, ...]                # relations preloaded with tensor projections
    neutral: Tuple[int, ...]                  # relations holding only the all-bottom tuple


def oumv_mapping(q: ConjunctiveQuery, rep: analyzer.DimensionReport) -> OumvMapping:
    check = analyzer.local_dimension(q, rep.connected_subset)
    if check.dimension < rep.dimension or rep.dimension != rep.counted:
        raise ValueError("dimension report is inconsistent with the query")
    keys = sorted(rep.key_set.values())
    dims = tuple(keys + sorted(rep.extra_outputs))
    active = set(rep.connected_subset) | set(dims)
    out_order = sorted(q.output)
    vector_relations: Dict[int, List[int]] = {i: [] for i in range(len(keys))}
    projected, neutral = [], []
    for r in q.relations:
        inter = set(r.attrs) & active
        if not inter:
            neutral.append(r.id)
        elif len(inter) == 1 and next(iter(inter)) in keys:
            vector_relations[keys.index(next(iter(inter)))].append(r.id)
        else:
            projected.append(r.id)
    for rid, key in rep.key_set.items():
        if set(q.relations[rid].attrs) & active != {key}:
            raise ValueError(f"relation {q.relations[rid].name} cannot serve key {q.attr_name(key)}")
    output_dims = {}
    for i in range(len(keys), len(dims)):
        if dims[i] not in q.output:
            raise ValueError("extra dimension is not an output attribute")
        output_dims[i] = out_order.index(dims[i])
    return OumvMapping(dims, frozenset(rep.connected_subset),
                       {i: tuple(v) for i, v in vector_relations.items()},
                       output_dims, tuple(projected), tuple(neutral))


def encode_oumv_general(q: ConjunctiveQuery, rep: analyzer.DimensionReport, m: BoolTensor,
                        rounds: Sequence[Sequence[Iterable[int]]], seed: Optional[int] = None,
                        verify: bool = True) -> WorkloadScript:
    """Simulate an OuMv instance on an arbitrary query through its
    dimension witness. Entry ids (0-based positions in the sparse tensor)
    glue the connected subset together; unused attributes hold BOTTOM."""
    if m.order != rep.dimension:
        raise ValueError(f"tensor order {m.order} does not match dimension {rep.dimension}")
    mp = oumv_mapping(q, rep)
    meta = {"gen": "oumv-general", "seed": str(seed), "n": str(m.side), "d": str(m.order)}
    script = WorkloadScript(q, meta=meta)
    steps = script.steps
    for rid in mp.neutral:
        r = q.relations[rid]
        steps.append(UpdateEvent("+", r.name, (BOTTOM,) * r.arity))
    for rid in mp.projected:
        r = q.relations[rid]
        rows = set()
        for entry, ident in m.with_ids():
            row = []
            for a in r.attrs:
                if a in mp.glue:
                    row.append(ident)
                elif a in mp.dims:
                    row.append(entry[mp.dims.index(a)])
                else:
                    row.append(BOTTOM)
            rows.add(tuple(row))
        steps.extend(UpdateEvent("+", r.name, t) for t in sorted(rows))

    def vector_row(rid: int, attr: int, value: int) -> Row:
        return tuple(value if a == attr else BOTTOM for a in q.relations[rid].attrs)

    db = Database(q) if verify else None
    if db is not None:
        for s in steps:
            db.apply(s)
    for idx, vectors in enumerate(rounds):
        vs = [sorted(set(v)) for v in vectors]
        if len(vs) != m.order:
            raise ValueError(f"round has {len(vs)} vectors, expected {m.order}")
        inserts = [UpdateEvent("+", q.relations[rid].name, vector_row(rid, mp.dims[i], c))
                   for i, rids in sorted(mp.vector_relations.items()) for rid in rids for c in vs[i]]
        filt = {pos: frozenset(vs[i]) for i, pos in mp.output_dims.items()}
        expected = oumv_brute(m, vs)
        if db is not None:
            for ev in inserts:
                db.apply(ev)
            got = bool(apply_filter(eval_acyclic_naive(db, q), filt))
            if got != expected:
                raise AssertionError("encoded instance disagrees with the tensor oracle")
            for ev in inserts:
                db.apply(UpdateEvent("-", ev.relation, ev.tuple))
        steps.extend(inserts)
        if filt:
            script.filters[idx] = filt
        steps.append(Checkpoint(expected))
        steps.extend(UpdateEvent("-", e.relation, e.tuple) for e in inserts)
    return script


# ---------------------------------------------------------------------------
# cycle detection by color coding


def default_trials(length: int, delta: float = 0.01) -> int:
    """Colorings needed so a fixed cycle is colorful in some trial with
    probability at least ``1 - delta``."""
    return math.ceil(math.log(1 / delta) * length ** length / math.factorial(length))


def path_query(length: int, variant: str = "path") -> Union[ConjunctiveQuery, Tuple[ConjunctiveQuery, ConjunctiveQuery]]:
    """``R1(x1), R2(x1,x2), .., R{L-1}(x{L-2},x{L-1}), RL(x{L-1})`` (Boolean),
    or for ``variant="intersection"`` its two halves meeting at x_h with
    ``length = 2h-1``, each outputting x_h."""
    names = [f"x{i}" for i in range(1, length)]
    rels = [("R1", [names[0]])]
    rels += [(f"R{i}", [names[i - 2], names[i - 1]]) for i in range(2, length)]
    rels.append((f"R{length}", [names[-1]]))
    if variant != "intersection":
        return ConjunctiveQuery.build(rels, ())
    half = (length + 1) // 2
    meet = f"x{half}"
    first = ConjunctiveQuery.build(rels[:half], [meet])
    second = ConjunctiveQuery.build(rels[half:], [meet])
    return first, second


@dataclass
class _ColorRound:
    """One (coloring, permutation) pair: edges per binary relation and the
    endpoint sets per candidate closing vertex."""
    edges: List[List[Tuple[int, int]]]          # index i -> edges for R{i+2}
    candidates: List[Tuple[int, List[int], List[int]]]  # (v, R1 values, RL values)
    answers: List[bool]


def _layered_path(starts: Iterable[int], layers: Sequence[Dict[int, List[int]]], ends: Set[int]) -> bool:
    frontier = set(starts)
    for layer in layers:
        frontier = {w for u in frontier for w in layer.get(u, ())}
        if not frontier:
            return False
    return bool(frontier & ends)


def _color_rounds(g, length: int, trials: int, rng: random.Random) -> Iterator[Tuple[int, _ColorRound]]:
    nodes = sorted(g.nodes)
    succ = {v: sorted(g.successors(v)) for v in nodes}
    pred = {v: sorted(g.predecessors(v)) for v in nodes}
    for trial in range(trials):
        color = {v: rng.randrange(length) for v in nodes}
        bucket: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        for u in nodes:
            for w in succ[u]:
                bucket.setdefault((color[u], color[w]), []).append((u, w))
        for p in itertools.permutations(range(length)):
            edges = [bucket.get((p[i - 1], p[i]), []) for i in range(1, length - 1)]
            layers = []
            for es in edges:
                adj: Dict[int, List[int]] = {}
                for u, w in es:
                    adj.setdefault(u, []).append(w)
                layers.append(adj)
            cands, answers = [], []
            for v in nodes:
                if color[v] != p[-1]:
                    continue
                first = [u for u in succ[v] if color[u] == p[0]]
                last = [u for u in pred[v] if color[u] == p[-2]]
                cands.append((v, first, last))
                answers.append(bool(first) and bool(last) and _layered_path(first, layers, set(last)))
            yield trial, _ColorRound(edges, cands, answers)


def detect_cycle_colorcoding(g, length: int, trials: Optional[int] = None, seed: int = 0) -> bool:
    """Run the color-coding reduction without materializing scripts; stops
    at the first true checkpoint."""
    rng = random.Random(seed)
    for _, rnd in _color_rounds(g, length, trials or default_trials(length), rng):
        if any(rnd.answers):
            return True
    return False


def encode_cycle(g, length: int, trials: Optional[int] = None, variant: str = "odd-path",
                 seed: int = 0) -> List[WorkloadScript]:
    """One script per (coloring, permutation). A true checkpoint means the
    graph has a simple cycle on ``length`` vertices."""
    if length < 3:
        raise ValueError("cycle length must be at least 3")
    if variant == "odd-path" and length % 2 == 0 or variant == "even-path" and length % 2:
        raise ValueError(f"{variant} needs a cycle length of matching parity")
    if variant == "intersection" and length % 2 == 0:
        raise ValueError("the intersection variant needs an odd cycle length")
    if variant not in ("odd-path", "even-path", "intersection"):
        raise ValueError(f"unknown variant {variant!r}")
    trials = trials or default_trials(length)
    rng = random.Random(seed)
    out = []
    for trial, rnd in _color_rounds(g, length, trials, rng):
        meta = {"gen": "cycle", "seed": str(seed), "k": str(length), "variant": variant, "trial": str(trial)}
        steps: List[Step] = []
        for i, es in enumerate(rnd.edges):
            steps.extend(UpdateEvent("+", f"R{i + 2}", e) for e in es)
        for (v, first, last), ans in zip(rnd.candidates, rnd.answers):
            ends = ([UpdateEvent("+", "R1", (u,)) for u in first]
                    + [UpdateEvent("+", f"R{length}", (u,)) for u in last])
            steps.extend(ends)
            steps.append(Checkpoint(ans))
            steps.extend(UpdateEvent("-", e.relation, e.tuple) for e in ends)
        for i, es in enumerate(rnd.edges):
            steps.extend(UpdateEvent("-", f"R{i + 2}", e) for e in es)
        if variant != "intersection":
            out.append(WorkloadScript(path_query(length), steps, meta))
            continue
        first_q, second_q = path_query(length, "intersection")
        halves = []
        for hq in (first_q, second_q):
            names = {r.name for r in hq.relations}
            part = [s for s in steps if isinstance(s, Checkpoint) or s.relation in names]
            halves.append(WorkloadScript(hq, part, dict(meta)))
        halves[0].companion = halves[1]
        out.append(halves[0])
    return out


def replay_cycle_script(script: WorkloadScript) -> List[bool]:
    """Oracle answers of a cycle script: non-emptiness for the path
    variants, a non-empty intersection of both halves otherwise."""
    if script.companion is None:
        return [bool(rows) for rows in replay_oracle(script)]
    a = replay_oracle(script)
    b = replay_oracle(script.companion)
    return [bool(x & y) for x, y in zip(a, b)]


def random_digraph(n: int, m: int, seed: int) -> nx.DiGraph:
    return nx.gnm_random_graph(n, m, seed=seed, directed=True)


def random_dag(n: int, m: int, seed: int) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for u, w in nx.gnm_random_graph(n, m, seed=seed).edges:
        g.add_edge(min(u, w), max(u, w))
    return g


def plant_cycle(g: nx.DiGraph, length: int, seed: int) -> List[int]:
    rng = random.Random(seed)
    cycle = rng.sample(sorted(g.nodes), length)
    for u, w in zip(cycle, cycle[1:] + cycle[:1]):
        g.add_edge(u, w)
    return cycle


def sparse_edge_count(n: int, length: int) -> int:
    """Default edge count n^(1 + 2/(length-1)), capped by the complete digraph."""
    return min(n * (n - 1), math.ceil(n ** (1 + 2 / (length - 1))))


# ---------------------------------------------------------------------------
# lifting path scripts onto a query


@dataclass(frozen=True)
class PathLayout:
    chain: Tuple[int, ...]        # query attributes along the path
    edges: Tuple[int, ...]        # query relation behind each path relation
    inner: ConjunctiveQuery       # the path query, attributes named as in the host query


def path_layout(q: ConjunctiveQuery, w: analyzer.ChordlessPathWitness) -> PathLayout:
    """Path query matching a chordless witness. For a q-chordless witness
    the output attribute on the output endpoint edge heads the chain and is
    the only output."""
    if w.length < 2:
        raise ValueError("lifting needs a path of length at least 2")
    name = q.attr_name
    verts = list(w.vertices)
    if w.is_q:
        if w.output_attribute is None:
            raise ValueError("q-chordless witness lacks its output attribute")
        y = w.output_attribute
        chain = [y] + verts
        rels = [("P1", [name(y), name(verts[0])])]
        rels += [(f"P{i + 1}", [name(verts[i - 1]), name(verts[i])]) for i in range(1, len(verts))]
        rels.append((f"P{len(verts) + 1}", [name(verts[-1])]))
        out = [name(y)]
    else:
        chain = verts
        rels = [("P1", [name(verts[0])])]
        rels += [(f"P{i + 1}", [name(verts[i - 1]), name(verts[i])]) for i in range(1, len(verts))]
        rels.append((f"P{len(verts) + 1}", [name(verts[-1])]))
        out = [name(a) for a in verts if a in q.output]
    if len(rels) != len(w.edge_seq) or len(set(w.edge_seq)) != len(w.edge_seq):
        raise ValueError("witness edge sequence does not match its path")
    inner = ConjunctiveQuery.build(rels, out, [name(a) for a in chain])
    for (_, attrs), e in zip(rels, w.edge_seq):
        if set(q.relations[e].attrs) & set(chain) != {q.attr_id(a) for a in attrs}:
            raise ValueError(f"relation {q.relations[e].name} does not match its path position")
    return PathLayout(tuple(chain), tuple(w.edge_seq), inner)


def gen_path_script(inner: ConjunctiveQuery, n_events: int, domain: int, seed: int,
                    checkpoint_every: int = 10, delete_ratio: float = 0.3) -> WorkloadScript:
    """Random inserts/deletes over a small domain with result-count checkpoints."""
    rng = random.Random(seed)
    db = Database(inner)
    live: Dict[str, List[Row]] = {r.name: [] for r in inner.relations}
    script = WorkloadScript(inner, meta={"gen": "path", "seed": str(seed), "n": str(domain)})
    for step in range(1, n_events + 1):
        r = rng.choice(inner.relations)
        rows = live[r.name]
        if rows and rng.random() < delete_ratio:
            t = rows.pop(rng.randrange(len(rows)))
            ev = UpdateEvent("-", r.name, t)
        else:
            t = tuple(rng.randrange(domain) for _ in r.attrs)
            if t not in db[r.name]:
                rows.append(t)
            ev = UpdateEvent("+", r.name, t)
        db.apply(ev)
        script.steps.append(ev)
        if step % checkpoint_every == 0:
            script.steps.append(Checkpoint(len(eval_acyclic_naive(db, inner))))
    script.steps.append(Checkpoint(len(eval_acyclic_naive(db, inner))))
    return script


def lift_path_updates(q: ConjunctiveQuery, w: analyzer.ChordlessPathWitness,
                      inner: WorkloadScript) -> WorkloadScript:
    """Replay a path-query script on ``q``: attributes off the path hold
    BOTTOM, relations touching one path attribute with no path relation of
    their own are preloaded with that attribute's full domain, and the rest
    mirror the path relation on the same attributes."""
    problems = analyzer.verify_chordless_witness(q, w)
    if problems:
        raise ValueError("invalid witness: " + "; ".join(problems))
    layout = path_layout(q, w)
    if inner.query != layout.inner:
        raise ValueError("inner script does not target the witness path query")
    chain = set(layout.chain)
    inner_sets = [frozenset(q.attr_id(inner.query.attr_name(a)) for a in r.attrs) for r in inner.query.relations]
    mirror: Dict[int, List[int]] = {}  # inner relation -> host relations
    for j, e in enumerate(layout.edges):
        mirror.setdefault(j, []).append(e)
    domains: Dict[int, Set[int]] = {a: set() for a in layout.chain}
    for ev in inner.events():
        r = inner.query.relation(ev.relation)
        for a, v in zip(r.attrs, ev.tuple):
            domains[q.attr_id(inner.query.attr_name(a))].add(v)
    preload: List[UpdateEvent] = []
    for r in q.relations:
        if r.id in layout.edges:
            continue
        inter = frozenset(r.attrs) & chain
        if not inter:
            preload.append(UpdateEvent("+", r.name, (BOTTOM,) * r.arity))
        elif inter in inner_sets:
            mirror[inner_sets.index(inter)].append(r.id)
        elif len(inter) == 1:
            (a,) = inter
            for v in sorted(domains[a]):
                preload.append(UpdateEvent("+", r.name, tuple(v if x == a else BOTTOM for x in r.attrs)))
        else:
            raise ValueError(f"relation {r.name} holds non-consecutive path attributes")

    def lift(ev: UpdateEvent) -> Iterator[UpdateEvent]:
        ir = inner.query.relation(ev.relation)
        value = {q.attr_id(inner.query.attr_name(a)): v for a, v in zip(ir.attrs, ev.tuple)}
        for rid in mirror[ir.id]:
            hr = q.relations[rid]
            yield UpdateEvent(ev.op, hr.name, tuple(value.get(a, BOTTOM) for a in hr.attrs))

    steps: List[Step] = list(preload)
    for s in inner.steps:
        if isinstance(s, Checkpoint):
            steps.append(Checkpoint(s.expected))
        else:
            steps.extend(lift(s))
    meta = dict(inner.meta)
    meta["gen"] = "lift:" + inner.meta.get("gen", "script")
    return WorkloadScript(q, steps, meta)


# ---------------------------------------------------------------------------
# synthetic star streams


class _Sampler:
    def __init__(self, domain: int, distribution: str, rng: random.Random):
        self.domain = domain
        self.rng = rng
        self.cum: Optional[List[float]] = None
        if distribution.startswith("zipf"):
            s = float(distribution.partition(":")[2] or distribution.partition("(")[2].rstrip(")") or 1.0)
            self.cum = list(itertools.accumulate(1.0 / (r ** s) for r in range(1, domain + 1)))
        elif distribution != "uniform":
            raise ValueError(f"unknown distribution {distribution!r}")
        self.values = range(domain)

    def draw(self) -> int:
        if self.cum is None:
            return self.rng.randrange(self.domain)
        return self.rng.choices(self.values, cum_weights=self.cum)[0]


def gen_random(spec: StarQuerySpec, n_events: int, domain: int, distribution: str = "uniform",
               seed: int = 0, checkpoints: int = 20, center_share: float = 0.8,
               delete_ratio: float = 0.25, oracle: bool = True) -> WorkloadScript:
    """Insert/delete mix over a star query. ``distribution`` is ``uniform``
    or ``zipf:<s>``; zipf skews every center value, which pushes the
    generalized H-index up. Checkpoints carry result count and digest."""
    rng = random.Random(seed)
    sampler = _Sampler(domain, distribution, rng)
    meta = {"gen": "random", "seed": str(seed), "n": str(domain), "dist": distribution,
            "events": str(n_events), **spec.header()}
    script = WorkloadScript(spec.to_query(), meta=meta)
    db = Database(script.query)
    names = [spec.center] + spec.satellites
    live: Dict[str, List[Row]] = {n: [] for n in names}
    pos: Dict[str, Dict[Row, int]] = {n: {} for n in names}
    every = max(1, n_events // checkpoints) if n_events else 1

    def checkpoint():
        if oracle:
            rows = eval_star_naive(db, spec)
            script.steps.append(Checkpoint(len(rows), result_digest(rows)))
        else:
            script.steps.append(Checkpoint())

    for step in range(1, n_events + 1):
        if spec.k == 0 or rng.random() < center_share:
            name = spec.center
        else:
            name = spec.satellite(rng.randrange(spec.k))
        rows, where = live[name], pos[name]
        if rows and rng.random() < delete_ratio:
            i = rng.randrange(len(rows))
            t = rows[i]
            rows[i] = rows[-1]
            where[rows[i]] = i
            rows.pop()
            del where[t]
            ev = UpdateEvent("-", name, t)
        else:
            arity = spec.d if name == spec.center else 1
            t = tuple(sampler.draw() for _ in range(arity))
            if t not in where:
                where[t] = len(rows)
                rows.append(t)
            ev = UpdateEvent("+", name, t)
        db.apply(ev)
        script.steps.append(ev)
        if step % every == 0:
            checkpoint()
    if not script.checkpoints() or not isinstance(script.steps[-1], Checkpoint):
        checkpoint()
    return script


def adversarial_oumv_stream(spec: StarQuerySpec, side: int, n_events: int, seed: int,
                            density: float = 0.5) -> WorkloadScript:
    """OuMv rounds on a dense random tensor until ``n_events`` updates."""
    rng = random.Random(seed)
    m = BoolTensor.random(spec.d, side, density, rng)
    per_round = max(1, 2 * spec.k * side // 2)
    count = max(1, (n_events - m.nnz) // per_round + 1)
    rounds = random_rounds(side, spec.d, count, rng)
    script = encode_oumv_star(m, rounds, spec, seed)
    kept, seen = [], 0
    for s in script.steps:
        if isinstance(s, UpdateEvent):
            if seen == n_events:
                break
            seen += 1
        kept.append(s)
    script.steps = kept
    script.meta["gen"] = "oumv-adversarial"
    return script
