"""Structural analysis of conjunctive queries.

Height (via chordless and q-chordless paths), dimension (via connected
subsets and distinct neighbor sets), ears / skeleton / residual queries,
free-connex join trees and the resulting classification.

Attribute and relation sets are handled as Python int bitmasks internally;
the public reports use frozensets of ids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from .model import ConjunctiveQuery, Hypergraph, build_hypergraph


class NotFreeConnex(ValueError):
    """Operation requires a free-connex query."""


def _bits(xs: Iterable[int]) -> int:
    m = 0
    for x in xs:
        m |= 1 << x
    return m


def _members(mask: int) -> List[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class _Masks:
    """Bitmask view of a query shared by the search routines."""

    def __init__(self, q: ConjunctiveQuery):
        self.q = q
        self.edges = [_bits(r.attrs) for r in q.relations]
        self.out = _bits(q.output)
        self.n = q.n_attrs
        self.incident = [[e for e, m in enumerate(self.edges) if m >> v & 1] for v in range(self.n)]
        self.nbr = [0] * self.n
        for m in self.edges:
            for v in _members(m):
                self.nbr[v] |= m
        for v in range(self.n):
            self.nbr[v] &= ~(1 << v)
        self.unique = _bits(v for v in range(self.n) if len(self.incident[v]) == 1)


# ---------------------------------------------------------------------------
# acyclicity


def _gyo_acyclic(edges: List[int]) -> bool:
    edges = [e for e in edges]
    while True:
        changed = False
        counts: Dict[int, int] = {}
        for e in edges:
            for v in _members(e):
                counts[v] = counts.get(v, 0) + 1
        lonely = _bits(v for v, c in counts.items() if c == 1)
        if lonely:
            edges = [e & ~lonely for e in edges]
            changed = True
        kept: List[int] = []
        for i, e in enumerate(edges):
            absorbed = e == 0 or any(
                (e & ~f) == 0 and (e != f or j < i) for j, f in enumerate(edges) if j != i
            )
            if absorbed:
                changed = True
            else:
                kept.append(e)
        edges = kept
        if not edges:
            return True
        if not changed:
            return False


def is_acyclic(q: ConjunctiveQuery) -> bool:
    """Alpha-acyclicity by GYO elimination."""
    return _gyo_acyclic([_bits(r.attrs) for r in q.relations])


def is_free_connex(q: ConjunctiveQuery) -> bool:
    """Acyclic, and still acyclic once the output set is added as an edge."""
    edges = [_bits(r.attrs) for r in q.relations]
    if not _gyo_acyclic(edges):
        return False
    if not q.output:
        return True
    return _gyo_acyclic(edges + [_bits(q.output)])


def is_q_hierarchical(q: ConjunctiveQuery) -> bool:
    inc = [_bits(q.relations_with(a)) for a in range(q.n_attrs)]
    for a in range(q.n_attrs):
        for b in range(q.n_attrs):
            if a == b:
                continue
            ea, eb = inc[a], inc[b]
            if ea & eb and ea & ~eb and eb & ~ea:
                return False
            # output attributes must be closed upward along strict containment
            if a in q.output and (ea & ~eb) == 0 and ea != eb and b not in q.output:
                return False
    return True


# ---------------------------------------------------------------------------
# ears, skeleton, residual


@dataclass(frozen=True)
class EarAssignment:
    ears: FrozenSet[int]
    anchor: Dict[int, int]
    all_anchors: Dict[int, FrozenSet[int]] = field(default_factory=dict)


def _ear_anchors(q: ConjunctiveQuery) -> Dict[int, FrozenSet[int]]:
    mk = _Masks(q)
    result = {}
    for r, e in enumerate(mk.edges):
        shared = e & ~mk.unique
        own = e & mk.unique
        anchors = []
        for s, f in enumerate(mk.edges):
            if s == r:
                continue
            cond_i = (shared & ~f) == 0 and (own & mk.out) == 0
            cond_ii = (shared & ~(f & mk.out)) == 0
            if cond_i or cond_ii:
                anchors.append(s)
        if anchors:
            result[r] = frozenset(anchors)
    return result


def _check_free_connex(q: ConjunctiveQuery, require: bool):
    if require and not is_free_connex(q):
        raise NotFreeConnex("query is not free-connex")


def find_ears(q: ConjunctiveQuery, require_free_connex: bool = True) -> EarAssignment:
    """Every ear with its lowest-id anchor (and the full anchor sets).

    With ``require_free_connex=False`` the ear conditions are evaluated on
    any query, which is how the classic fixtures that are not actually
    free-connex can still be inspected.
    """
    _check_free_connex(q, require_free_connex)
    anchors = _ear_anchors(q)
    return EarAssignment(frozenset(anchors), {r: min(a) for r, a in anchors.items()}, anchors)


def _reduce(q: ConjunctiveQuery, priority: Optional[Sequence[int]] = None) -> Tuple[FrozenSet[int], List[Tuple[int, int]]]:
    """Run the fixed-ear reduction; returns the skeleton and the removal log
    as (ear, anchor still present at removal time)."""
    anchors = _ear_anchors(q)
    order = list(priority) if priority is not None else list(range(len(q.relations)))
    alive = set(range(len(q.relations)))
    log = []
    progress = True
    while progress:
        progress = False
        for r in order:
            if r in alive and r in anchors:
                present = sorted(a for a in anchors[r] if a in alive)
                if present:
                    alive.remove(r)
                    log.append((r, present[0]))
                    progress = True
                    break
    return frozenset(alive), log


def skeleton(q: ConjunctiveQuery, priority: Optional[Sequence[int]] = None,
             require_free_connex: bool = True) -> FrozenSet[int]:
    """Relations left after removing ears while their anchor remains.

    ``priority`` fixes which removable ear is taken first (default: lowest
    id); different priorities may give different but equivalent skeletons.
    """
    _check_free_connex(q, require_free_connex)
    return _reduce(q, priority)[0]


def residual_query(q: ConjunctiveQuery, priority: Optional[Sequence[int]] = None,
                   require_free_connex: bool = True) -> ConjunctiveQuery:
    """Skeleton-induced query; ids are re-densified, names preserved."""
    return q.induced(skeleton(q, priority, require_free_connex))


def skeletons_equivalent(q: ConjunctiveQuery, first: Iterable[int], second: Iterable[int]) -> bool:
    """Do two skeletons agree up to swapping relations whose non-unique
    attribute sets coincide?"""
    mk = _Masks(q)
    a, b = set(first), set(second)

    def core(r):
        return mk.edges[r] & ~mk.unique

    for r in a - b:
        if not any(core(s) == core(r) for s in b - a):
            return False
    for r in b - a:
        if not any(core(s) == core(r) for s in a - b):
            return False
    return True


# ---------------------------------------------------------------------------
# chordless paths


@dataclass(frozen=True)
class ChordlessPathWitness:
    length: int
    vertices: Tuple[int, ...]
    edge_seq: Tuple[int, ...]
    is_q: bool = False
    output_endpoint: Optional[int] = None
    output_attribute: Optional[int] = None


def _first_edge(mk: _Masks, inside: int, outside: int) -> Optional[int]:
    for e, m in enumerate(mk.edges):
        if m >> inside & 1 and not (outside >= 0 and m >> outside & 1):
            return e
    return None


def _edge_sequence(mk: _Masks, seq: Sequence[int]) -> Tuple[int, ...]:
    if not seq:
        return (0,)
    if len(seq) == 1:
        return tuple(mk.incident[seq[0]][:2])
    first = _first_edge(mk, seq[0], seq[1])
    middle = []
    for u, v in zip(seq, seq[1:]):
        middle.append(next(e for e, m in enumerate(mk.edges) if m >> u & 1 and m >> v & 1))
    last = _first_edge(mk, seq[-1], seq[-2])
    return (first, *middle, last)


def _induced_paths(mk: _Masks, allowed: int) -> Iterator[List[int]]:
    """All sequences of distinct allowed vertices that are adjacent in order
    and have no edge between non-consecutive members (each path appears in
    both directions)."""
    seq: List[int] = []

    def grow(blocked: int) -> Iterator[List[int]]:
        yield seq
        last = seq[-1]
        cand = mk.nbr[last] & allowed & ~blocked
        for w in _members(cand):
            seq.append(w)
            # w may not touch anything before ``last``
            yield from grow(blocked | (1 << w) | mk.nbr[last] | (1 << last))
            seq.pop()

    for v in _members(allowed):
        seq.append(v)
        yield from grow(1 << v)
        seq.pop()


def _endpoints_ok(mk: _Masks, seq: Sequence[int]) -> bool:
    if len(seq) == 1:
        return len(mk.incident[seq[0]]) >= 2
    return (_first_edge(mk, seq[0], seq[1]) is not None
            and _first_edge(mk, seq[-1], seq[-2]) is not None)


def longest_chordless_path(h_or_q) -> ChordlessPathWitness:
    """A maximum-length chordless path; ties go to the lexicographically
    smallest vertex sequence."""
    q = h_or_q if isinstance(h_or_q, ConjunctiveQuery) else _query_of_hypergraph(h_or_q)
    mk = _Masks(q)
    best: Tuple[int, Tuple[int, ...]] = (1, ())
    for seq in _induced_paths(mk, (1 << mk.n) - 1):
        length = len(seq) + 1
        if length < best[0] or (length == best[0] and tuple(seq) >= best[1] and best[1]):
            continue
        if _endpoints_ok(mk, seq):
            best = (length, tuple(seq))
    length, seq = best
    return ChordlessPathWitness(length, seq, _edge_sequence(mk, seq))


def _q_endpoint(mk: _Masks, seq: Sequence[int]) -> Optional[Tuple[Tuple[int, ...], int, int]]:
    """If ``seq`` satisfies the output-endpoint condition, return it oriented
    so the output endpoint comes first, with that edge and the output
    attribute hanging off it.

    The output attribute is treated as one more path vertex in front of the
    first one: no edge may hold it together with a later path vertex, and a
    single-vertex path needs a second edge that misses it.
    """
    pmask = _bits(seq)
    for oriented in (tuple(seq), tuple(reversed(seq))):
        end = oriented[0]
        rest = pmask & ~(1 << end)
        for e, m in enumerate(mk.edges):
            if m & pmask != 1 << end:
                continue
            for y in _members(m & mk.out):
                if any(other >> y & 1 and other & rest for other in mk.edges):
                    continue
                if len(seq) == 1 and not any(mk.edges[f] >> y & 1 == 0 for f in mk.incident[end]):
                    continue
                return oriented, e, y
    return None


def longest_q_chordless_path(q: ConjunctiveQuery) -> Optional[ChordlessPathWitness]:
    mk = _Masks(q)
    best: Optional[ChordlessPathWitness] = None
    mixed = [e for e, m in enumerate(mk.edges) if m & mk.out and m & ~mk.out]
    if mixed:
        best = ChordlessPathWitness(1, (), (mixed[0],), True, mixed[0])
    non_output = ((1 << mk.n) - 1) & ~mk.out
    for seq in _induced_paths(mk, non_output):
        length = len(seq) + 1
        if best is not None and length <= best.length:
            continue
        if not _endpoints_ok(mk, seq):
            continue
        hit = _q_endpoint(mk, seq)
        if hit is None:
            continue
        oriented, out_edge, y = hit
        if len(oriented) == 1:
            other = next(e for e in mk.incident[oriented[0]] if not mk.edges[e] >> y & 1)
            edges = (out_edge, other)
        else:
            tail = _edge_sequence(mk, oriented)
            edges = (out_edge, *tail[1:])
        best = ChordlessPathWitness(length, oriented, edges, True, out_edge, y)
    return best


def _query_of_hypergraph(h: Hypergraph) -> ConjunctiveQuery:
    rels = [(f"E{eid}", [f"v{v}" for v in sorted(vs)]) for eid, vs in h.edges]
    return ConjunctiveQuery.build(rels, (), [f"v{v}" for v in sorted(h.vertices)])


def verify_chordless_witness(q: ConjunctiveQuery, w: ChordlessPathWitness) -> List[str]:
    """Re-check a witness against the definitions; returns the violations."""
    edges = [frozenset(r.attrs) for r in q.relations]
    problems = []
    seq = list(w.vertices)
    if len(seq) != max(w.length - 1, 0):
        problems.append("vertex count does not match length")
    if len(set(seq)) != len(seq):
        problems.append("repeated vertex")
    if w.length == 1:
        if len(w.edge_seq) != 1:
            problems.append("length-1 path needs exactly one edge")
    elif w.length == 2:
        if len(set(w.edge_seq)) != 2 or not all(seq[0] in edges[e] for e in w.edge_seq):
            problems.append("length-2 path needs two distinct edges through the vertex")
    else:
        if len(w.edge_seq) != w.length:
            problems.append("edge sequence length mismatch")
        else:
            for i in range(len(seq) - 1):
                if not {seq[i], seq[i + 1]} <= edges[w.edge_seq[i + 1]]:
                    problems.append(f"adjacency fails at position {i}")
            for i in range(len(seq)):
                for j in range(i + 2, len(seq)):
                    if any(seq[i] in e and seq[j] in e for e in edges):
                        problems.append(f"shortcut between positions {i} and {j}")
            first, last = edges[w.edge_seq[0]], edges[w.edge_seq[-1]]
            if seq[0] not in first or seq[1] in first:
                problems.append("first endpoint edge invalid")
            if seq[-1] not in last or seq[-2] in last:
                problems.append("last endpoint edge invalid")
    if w.is_q:
        out = q.output
        if w.length == 1:
            e = edges[w.edge_seq[0]]
            if not (e & out and e - out):
                problems.append("length-1 q-path edge must mix output and non-output")
        else:
            if any(v in out for v in seq):
                problems.append("q-path uses an output vertex")
            oe = w.output_endpoint
            if oe is None or oe not in w.edge_seq:
                problems.append("output endpoint edge missing from the sequence")
            elif not edges[oe] & out or edges[oe] & set(seq) not in ({seq[0]}, {seq[-1]}):
                problems.append("output endpoint edge invalid")
            else:
                y = w.output_attribute
                near = next(iter(edges[oe] & set(seq)))
                if y is None or y not in edges[oe] & out:
                    problems.append("output attribute missing from the output endpoint edge")
                elif any(y in e and e & (set(seq) - {near}) for e in edges):
                    problems.append("output attribute shares an edge with a far path vertex")
                elif len(seq) == 1 and all(y in edges[e] for e in w.edge_seq):
                    problems.append("second edge of a single-vertex q-path must miss the output attribute")
    return problems


@dataclass(frozen=True)
class HeightReport:
    height: int
    max_chordless: ChordlessPathWitness
    max_q_chordless: Optional[ChordlessPathWitness]

    @property
    def chordless_length(self) -> int:
        return self.max_chordless.length

    @property
    def q_chordless_length(self) -> int:
        return self.max_q_chordless.length if self.max_q_chordless else 0


def height(q: ConjunctiveQuery) -> HeightReport:
    lc = longest_chordless_path(q)
    lq = longest_q_chordless_path(q)
    k = max(math.ceil(lc.length / 2), lq.length if lq else 0)
    return HeightReport(k, lc, lq)


# ---------------------------------------------------------------------------
# dimension


@dataclass(frozen=True)
class DimensionReport:
    dimension: int
    connected_subset: FrozenSet[int]
    active_relations: FrozenSet[int]
    neighbor_set: FrozenSet[int]
    key_set: Dict[int, int]
    extra_outputs: FrozenSet[int]
    active_attributes: FrozenSet[int] = frozenset()

    @property
    def keys(self) -> FrozenSet[int]:
        return frozenset(self.key_set.values())

    @property
    def counted(self) -> int:
        return len(self.key_set) + len(self.extra_outputs)


def _local(q: ConjunctiveQuery, mk: _Masks, vc: int, ec: int) -> DimensionReport:
    """Search distinct neighbor sets relation by relation.

    A relation joins the neighbor set under key ``a`` only if ``a`` is the
    sole attribute it shares with the chosen keys, and no counted extra
    output sits in any neighbor. That is exactly what the hardness
    construction needs to drive one vector per key through that relation.
    """
    star = 0
    for r in _members(ec):
        star |= mk.edges[r]
    star &= ~vc
    candidates = [r for r in range(len(mk.edges)) if not ec >> r & 1 and mk.edges[r] & star]
    out_in_vc = bool(vc & mk.out)
    pool = star & mk.out
    best_value = -1
    best: Tuple[Dict[int, int], int] = ({}, 0)

    def value(keys: int, touched: int) -> Tuple[int, int]:
        if out_in_vc or keys & ~mk.out == 0:
            return bin(keys).count("1"), 0
        extra = pool & ~keys & ~touched
        return bin(keys | extra).count("1"), extra

    def search(i: int, chosen: Dict[int, int], keys: int, touched: int):
        nonlocal best_value, best
        if i == len(candidates):
            val, extra = value(keys, touched)
            if val > best_value:
                best_value = val
                best = (dict(chosen), extra)
            return
        if bin(keys).count("1") + len(candidates) - i + bin(pool).count("1") <= best_value:
            return
        r = candidates[i]
        shared = mk.edges[r] & star
        if shared & keys == 0:
            # prefer non-output keys so the extra outputs stay countable
            for a in sorted(_members(shared), key=lambda a: (mk.out >> a & 1, a)):
                if any(mk.edges[o] & (1 << a) for o in chosen):
                    continue
                chosen[r] = a
                search(i + 1, chosen, keys | 1 << a, touched | shared)
                del chosen[r]
        search(i + 1, chosen, keys, touched)

    search(0, {}, 0, 0)
    match, extra = best
    return DimensionReport(
        best_value, frozenset(_members(vc)), frozenset(_members(ec)), frozenset(match),
        dict(sorted(match.items())), frozenset(_members(extra)), frozenset(_members(star)),
    )


def local_dimension(q: ConjunctiveQuery, vc: Iterable[int], active: Optional[int] = None) -> DimensionReport:
    """Local dimension of a connected subset of join attributes.

    For the empty subset, ``active`` names the single active relation.
    The reported value is the raw case-split value (it may be 0).
    """
    mk = _Masks(q)
    vmask = _bits(vc)
    if vmask & mk.unique:
        raise ValueError("connected subset may only contain join attributes")
    if vmask == 0:
        if active is None:
            raise ValueError("empty connected subset needs an active relation")
        return _local(q, mk, 0, 1 << active)
    if not _is_connected(mk, vmask):
        raise ValueError("subset is not connected in the primal graph")
    ec = _bits(r for r, m in enumerate(mk.edges) if m & vmask)
    return _local(q, mk, vmask, ec)


def _is_connected(mk: _Masks, vmask: int) -> bool:
    start = vmask & -vmask
    seen = start
    frontier = start
    while frontier:
        grow = 0
        for v in _members(frontier):
            grow |= mk.nbr[v]
        grow &= vmask & ~seen
        seen |= grow
        frontier = grow
    return seen == vmask


def connected_subsets(q: ConjunctiveQuery) -> Iterator[FrozenSet[int]]:
    """Every non-empty connected subset of join attributes, smallest first."""
    mk = _Masks(q)
    join = ((1 << mk.n) - 1) & ~mk.unique
    seen = set()
    layer = [1 << v for v in _members(join)]
    seen.update(layer)
    while layer:
        layer.sort(key=lambda m: _members(m))
        for m in layer:
            yield frozenset(_members(m))
        nxt = []
        for m in layer:
            frontier = 0
            for v in _members(m):
                frontier |= mk.nbr[v]
            frontier &= join & ~m
            for v in _members(frontier):
                g = m | 1 << v
                if g not in seen:
                    seen.add(g)
                    nxt.append(g)
        layer = nxt


def _preference(rep: DimensionReport, out: int):
    vc = rep.connected_subset
    return (
        rep.dimension,
        not (_bits(vc) & out),
        len(vc),
        [-v for v in sorted(vc)],
        [-r for r in sorted(rep.active_relations)],
    )


def dimension(q: ConjunctiveQuery) -> DimensionReport:
    """Maximum local dimension, floored at 1.

    Among equal values the witness prefers a connected subset free of
    output attributes, then a larger subset, then the lexicographically
    smallest one; the empty subset (one active relation at a time) comes
    last.
    """
    mk = _Masks(q)
    reports = []
    for vc in connected_subsets(q):
        vmask = _bits(vc)
        ec = _bits(r for r, m in enumerate(mk.edges) if m & vmask)
        reports.append(_local(q, mk, vmask, ec))
    for r in range(len(mk.edges)):
        reports.append(_local(q, mk, 0, 1 << r))
    best = max(reports, key=lambda rep: _preference(rep, mk.out))
    if best.dimension < 1:
        best = DimensionReport(1, best.connected_subset, best.active_relations, best.neighbor_set,
                               best.key_set, best.extra_outputs, best.active_attributes)
    return best


# ---------------------------------------------------------------------------
# join trees


@dataclass(frozen=True)
class TreeNode:
    id: int
    relation: Optional[int]  # None for a generalized node
    attrs: FrozenSet[int]
    parent: Optional[int]

    @property
    def is_input(self) -> bool:
        return self.relation is not None


@dataclass(frozen=True)
class JoinTree:
    nodes: Tuple[TreeNode, ...]
    root: int
    connex_set: FrozenSet[int]

    def children(self, nid: int) -> List[int]:
        return [n.id for n in self.nodes if n.parent == nid]

    def depth_in_inputs(self, nid: int) -> int:
        count = 0
        cur: Optional[int] = nid
        while cur is not None:
            node = self.nodes[cur]
            count += node.is_input
            cur = node.parent
        return count

    @property
    def height(self) -> int:
        return max((self.depth_in_inputs(n.id) for n in self.nodes), default=0)

    def node_of_relation(self, rid: int) -> int:
        return next(n.id for n in self.nodes if n.relation == rid)


@dataclass(frozen=True)
class TreeVerdict:
    cover: bool
    connect: bool
    above: bool
    guard: bool
    connex: bool
    height: int
    problems: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.cover and self.connect and self.above and self.guard and self.connex


def validate_join_tree(q: ConjunctiveQuery, t: JoinTree) -> TreeVerdict:
    problems: List[str] = []
    ids = {n.id for n in t.nodes}
    well_formed = all(n.id == i for i, n in enumerate(t.nodes)) and t.root in ids
    well_formed = well_formed and t.nodes[t.root].parent is None
    well_formed = well_formed and all(n.parent is None or n.parent in ids for n in t.nodes)
    if well_formed:
        for n in t.nodes:
            seen = set()
            cur: Optional[int] = n.id
            while cur is not None and cur not in seen:
                seen.add(cur)
                cur = t.nodes[cur].parent
            if cur is not None or t.root not in seen:
                well_formed = False
                break
    if not well_formed:
        problems.append("not a single rooted tree")
        return TreeVerdict(False, False, False, False, False, 0, tuple(problems))

    cover = True
    for r in q.relations:
        holders = [n for n in t.nodes if n.relation == r.id]
        if not holders:
            cover = False
            problems.append(f"relation {r.name} missing")
    for n in t.nodes:
        if n.is_input:
            if n.relation is None or not 0 <= n.relation < len(q.relations) or n.attrs != q.attrs_of(n.relation):
                cover = False
                problems.append(f"node {n.id} does not match its relation")
        else:
            if not any(n.attrs <= q.attrs_of(r.id) for r in q.relations):
                cover = False
                problems.append(f"generalized node {n.id} is not inside any relation")
            if not t.children(n.id):
                cover = False
                problems.append(f"generalized node {n.id} is a leaf")

    connect = True
    for a in range(q.n_attrs):
        holding = [n for n in t.nodes if a in n.attrs]
        tops = [n for n in holding if n.parent is None or a not in t.nodes[n.parent].attrs]
        if len(tops) != 1:
            connect = False
            problems.append(f"attribute {q.attr_name(a)} is split across the tree")

    above = True
    for n in t.nodes:
        if not n.is_input:
            cur = n.parent
            while cur is not None:
                if t.nodes[cur].is_input:
                    above = False
                    problems.append(f"generalized node {n.id} sits below an input node")
                    break
                cur = t.nodes[cur].parent

    guard = True
    for n in t.nodes:
        if n.parent is not None and not t.nodes[n.parent].is_input:
            if not t.nodes[n.parent].attrs <= n.attrs:
                guard = False
                problems.append(f"node {n.id} does not contain its generalized parent")

    connex = t.root in t.connex_set and t.connex_set <= ids
    covered: FrozenSet[int] = frozenset()
    for nid in t.connex_set & ids:
        n = t.nodes[nid]
        covered |= n.attrs
        if n.parent is None:
            continue
        if n.parent not in t.connex_set:
            connex = False
            problems.append(f"connex node {nid} is cut off from the root")
        elif not (n.attrs & t.nodes[n.parent].attrs) <= q.output:
            connex = False
            problems.append(f"connex node {nid} shares a non-output attribute with its parent")
    if not q.output <= covered:
        connex = False
        problems.append("connex set misses an output attribute")
    return TreeVerdict(cover, connect, above, guard, connex, t.height, tuple(problems))


def assemble_tree(q: ConjunctiveQuery, parent: Dict[int, Optional[int]]) -> Optional[JoinTree]:
    """Complete an input-relation forest into a free-connex join tree.

    ``parent[r]`` is another relation or None for the top level. The
    generalized part above the forest is derived: an attribute carried by
    several top-level subtrees (or an output held by a top relation) lives
    in the generalized nodes spanning exactly those subtrees. Returns None
    when no such completion exists (the spanning sets must nest).
    """
    n = len(q.relations)
    top_of = {}
    for r in range(n):
        x = r
        steps = 0
        while parent[x] is not None:
            x = parent[x]
            steps += 1
            if steps > n:
                return None
        top_of[r] = x
    tops = sorted(set(top_of.values()))
    sub_attrs = {t: frozenset() for t in tops}
    for r in range(n):
        sub_attrs[top_of[r]] |= q.attrs_of(r)
    span: Dict[int, FrozenSet[int]] = {}
    for a in range(q.n_attrs):
        holders = frozenset(t for t in tops if a in sub_attrs[t])
        if len(holders) >= 2 or (len(holders) == 1 and a in q.output and a in q.attrs_of(next(iter(holders)))):
            if any(a not in q.attrs_of(t) for t in holders):
                return None
            span[a] = holders
    families = sorted(set(span.values()), key=lambda s: (-len(s), sorted(s)))
    for i, s1 in enumerate(families):
        for s2 in families[i + 1:]:
            if s1 & s2 and not s2 <= s1:
                return None
    nodes: List[TreeNode] = [TreeNode(0, None, frozenset(), None)]
    gen_id: Dict[FrozenSet[int], int] = {}
    for s in families:
        bigger = [f for f in families if s < f]
        p = gen_id[min(bigger, key=len)] if bigger else 0
        attrs = frozenset(a for a, f in span.items() if f >= s)
        gen_id[s] = len(nodes)
        nodes.append(TreeNode(len(nodes), None, attrs, p))
    rel_node = {r: len(nodes) + i for i, r in enumerate(range(n))}
    for r in range(n):
        if parent[r] is None:
            holders = [f for f in families if r in f]
            p = gen_id[min(holders, key=len)] if holders else 0
        else:
            p = rel_node[parent[r]]
        nodes.append(TreeNode(rel_node[r], r, q.attrs_of(r), p))
    in_con = {0}
    order = sorted(range(1, len(nodes)), key=lambda i: _depth(nodes, i))
    for i in order:
        nd = nodes[i]
        if nd.parent in in_con and (nd.attrs & nodes[nd.parent].attrs) <= q.output:
            in_con.add(i)
    return JoinTree(tuple(nodes), 0, frozenset(in_con))


def _depth(nodes: Sequence[TreeNode], i: int) -> int:
    d = 0
    cur = nodes[i].parent
    while cur is not None:
        d += 1
        cur = nodes[cur].parent
    return d


def _forest_depth(parent: Dict[int, Optional[int]], r: int) -> int:
    d = 1
    while parent[r] is not None:
        r = parent[r]
        d += 1
    return d


def _tree_ok(q: ConjunctiveQuery, parent: Dict[int, Optional[int]]) -> Optional[JoinTree]:
    t = assemble_tree(q, parent)
    if t is not None and validate_join_tree(q, t).ok:
        return t
    return None


def residual_levels(q: ConjunctiveQuery) -> List[ConjunctiveQuery]:
    """The query followed by its residual, the residual's residual and so
    on, ending at the first q-hierarchical one."""
    levels = [q]
    while not is_q_hierarchical(levels[-1]):
        nxt = residual_query(levels[-1], require_free_connex=False)
        if len(nxt.relations) == len(levels[-1].relations):
            raise NotFreeConnex("ear removal stalled on a non-q-hierarchical residual")
        levels.append(nxt)
    return levels


def tree_height(q: ConjunctiveQuery) -> int:
    """Smallest free-connex join tree height, via the residual recursion."""
    if not is_free_connex(q):
        raise NotFreeConnex("query is not free-connex")
    return len(residual_levels(q))


def build_free_connex_join_tree(q: ConjunctiveQuery) -> JoinTree:
    """Free-connex join tree of minimum height.

    Follows the residual recursion: peel ears level by level until the
    residual is q-hierarchical, put the last skeleton at the top, then hang
    each level's ears back, preferring the skeleton relation their anchor
    chain ends in. Placements are searched with backtracking; every
    candidate forest is checked with ``validate_join_tree``.
    """
    if not is_free_connex(q):
        raise NotFreeConnex("query is not free-connex")
    levels = residual_levels(q)
    target = len(levels)
    rid = {r.name: r.id for r in q.relations}

    start: Dict[int, Optional[int]] = {rid[r.name]: None for r in levels[-1].relations}
    order: List[Tuple[int, int, List[int]]] = []
    placed_before = set(start)
    for level in reversed(levels[:-1]):
        _, log = _reduce(level)
        mk = _Masks(level)
        final = dict(log)
        for ear in list(final):
            a = final[ear]
            while a in final:
                a = final[a]
            final[ear] = a
        for ear, _ in reversed(log):
            me = rid[level.relations[ear].name]
            shared = mk.edges[ear] & ~mk.unique
            covering = [
                rid[level.relations[s].name]
                for s in range(len(level.relations))
                if s != ear and shared & ~mk.edges[s] == 0 and rid[level.relations[s].name] in placed_before
            ]
            preferred = rid[level.relations[final[ear]].name]
            covering.sort(key=lambda o: (o != preferred, o))
            order.append((me, preferred, covering))
            placed_before.add(me)

    def attempt(prune: bool) -> Optional[JoinTree]:
        parent = dict(start)

        def place(i: int) -> Optional[JoinTree]:
            if i == len(order):
                return _tree_ok(q, parent)
            me, _, covering = order[i]
            options: List[Optional[int]] = sorted(covering, key=lambda o: (o != covering[0], _forest_depth(parent, o)))
            options.append(None)
            for opt in options:
                parent[me] = opt
                if _forest_depth(parent, me) <= target and (not prune or _partial_ok(q, parent)):
                    found = place(i + 1)
                    if found is not None:
                        return found
                del parent[me]
            return None

        return place(0)

    tree = attempt(True) or attempt(False)
    if tree is None or tree.height != target:
        raise RuntimeError("join tree construction failed to produce a valid tree")
    return tree


def _partial_ok(q: ConjunctiveQuery, parent: Dict[int, Optional[int]]) -> bool:
    sub = sorted(parent)
    local = {r: i for i, r in enumerate(sub)}
    local_parent = {local[r]: (None if p is None else local[p]) for r, p in parent.items()}
    return _tree_ok(q.induced(sub), local_parent) is not None


def render_tree(q: ConjunctiveQuery, t: JoinTree) -> str:
    lines = []

    def show(nid: int, depth: int):
        n = t.nodes[nid]
        label = q.relations[n.relation].name if n.is_input else "[" + ",".join(q.names(n.attrs)) + "]"
        if n.is_input:
            label += "(" + ",".join(q.attr_name(a) for a in q.relations[n.relation].attrs) + ")"
        mark = " *" if nid in t.connex_set else ""
        lines.append("  " * depth + label + mark)
        for c in t.children(nid):
            show(c, depth + 1)

    show(t.root, 0)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# classification


def classify(q: ConjunctiveQuery) -> str:
    if not is_acyclic(q):
        return "cyclic"
    if not is_free_connex(q):
        return "not-free-connex"
    if is_q_hierarchical(q):
        return "q-hierarchical"
    k = height(q).height
    if k == 2:
        return "weak-q-hierarchical"
    return f"height-{k}"


def is_weak_q_hierarchical(q: ConjunctiveQuery) -> bool:
    return (is_free_connex(q) and not is_q_hierarchical(q)
            and is_q_hierarchical(residual_query(q)))


# ---------------------------------------------------------------------------
# canonical text rendering


def render_path(q: ConjunctiveQuery, w: Optional[ChordlessPathWitness]) -> str:
    if w is None:
        return "none"
    verts = ",".join(q.attr_name(v) for v in w.vertices)
    edges = ",".join(q.relations[e].name for e in w.edge_seq)
    s = f"length={w.length} P=[{verts}] edges=[{edges}]"
    if w.is_q and w.output_endpoint is not None:
        s += f" output_endpoint={q.relations[w.output_endpoint].name}"
    return s


def render_dimension(q: ConjunctiveQuery, d: DimensionReport) -> str:
    keys = ",".join(f"{q.relations[r].name}->{q.attr_name(a)}" for r, a in sorted(d.key_set.items()))
    return (
        f"dimension={d.dimension} Vc=[{','.join(q.names(d.connected_subset))}]"
        f" Ec=[{','.join(q.rel_names(d.active_relations))}]"
        f" keys=[{keys}] extra=[{','.join(q.names(d.extra_outputs))}]"
    )


def render_report(q: ConjunctiveQuery) -> str:
    """Stable multi-line analysis report."""
    h = height(q)
    d = dimension(q)
    lines = [
        f"class={classify(q)}",
        f"height={h.height}",
        f"chordless: {render_path(q, h.max_chordless)}",
        f"q-chordless: {render_path(q, h.max_q_chordless)}",
        render_dimension(q, d),
        f"acyclic={str(is_acyclic(q)).lower()} free_connex={str(is_free_connex(q)).lower()}"
        f" q_hierarchical={str(is_q_hierarchical(q)).lower()}",
    ]
    if is_acyclic(q):
        ears = find_ears(q, require_free_connex=False)
        lines.append("ears=[" + ",".join(
            f"{q.relations[e].name}<-{q.relations[ears.anchor[e]].name}" for e in sorted(ears.ears)) + "]")
        res = residual_query(q, require_free_connex=False)
        lines.append("residual: " + _rule(res))
    return "\n".join(lines)


def _rule(q: ConjunctiveQuery) -> str:
    from .model import rule_text
    return rule_text(q)
