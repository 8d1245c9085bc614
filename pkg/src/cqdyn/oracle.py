"""Brute-force ground truth.

Every function here is written directly from the definitions against the
model module only, so that the analyzer and the engine can be checked
against code that shares none of their shortcuts.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .model import ConjunctiveQuery, Database, StarQuerySpec

DEFAULT_JOIN_CAP = 10**7


class OracleCapExceeded(RuntimeError):
    """Raised instead of silently truncating an oversized brute-force run."""


# ---------------------------------------------------------------------------
# tensors


@dataclass(frozen=True)
class BoolTensor:
    """Sparse Boolean tensor of the given order over ``[0, side)``.

    ``entries`` is kept sorted; an entry's position in it is its dense
    identifier.
    """

    order: int
    side: int
    entries: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        for e in self.entries:
            if len(e) != self.order or not all(0 <= c < self.side for c in e):
                raise ValueError(f"entry {e} outside [0,{self.side})^{self.order}")
        if list(self.entries) != sorted(set(self.entries)):
            object.__setattr__(self, "entries", tuple(sorted(set(self.entries))))

    @classmethod
    def from_entries(cls, order: int, side: int, entries: Iterable[Sequence[int]]) -> "BoolTensor":
        return cls(order, side, tuple(sorted({tuple(e) for e in entries})))

    @classmethod
    def random(cls, order: int, side: int, density: float, rng: random.Random) -> "BoolTensor":
        cells = itertools.product(range(side), repeat=order)
        return cls.from_entries(order, side, (c for c in cells if rng.random() < density))

    @classmethod
    def full(cls, order: int, side: int) -> "BoolTensor":
        return cls.from_entries(order, side, itertools.product(range(side), repeat=order))

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def with_ids(self) -> List[Tuple[Tuple[int, ...], int]]:
        return [(e, i) for i, e in enumerate(self.entries)]


def oumv_brute(m: BoolTensor, vectors: Sequence[Iterable[int]]) -> bool:
    """Does the tensor meet the product of the query vectors?

    Each vector is given by the set of its 1-coordinates.
    """
    if len(vectors) != m.order:
        raise ValueError(f"expected {m.order} vectors, got {len(vectors)}")
    vs = [set(v) for v in vectors]
    for v in vs:
        if any(not 0 <= c < m.side for c in v):
            raise ValueError("vector coordinate out of range")
    return any(all(c[i] in vs[i] for i in range(m.order)) for c in m.entries)


# ---------------------------------------------------------------------------
# query evaluation


def eval_star_naive(db: Database, spec: StarQuerySpec, loop_order: str = "center") -> Set[Tuple[int, ...]]:
    """Result of the star query on ``db``.

    ``loop_order="center"`` filters center tuples one by one;
    ``loop_order="satellite"`` drives from the satellites through
    per-position indexes. Both must agree.
    """
    center = db[spec.center]
    lo = spec.d - spec.j
    if loop_order == "center":
        sats = [db[spec.satellite(i)] for i in range(spec.k)]
        out = set()
        for t in center:
            if all((t[i],) in sats[i] for i in range(spec.k)):
                out.add(t[lo:])
        return out
    if loop_order == "satellite":
        alive: Optional[Set[Tuple[int, ...]]] = None
        for i in range(spec.k):
            index: Dict[int, List[Tuple[int, ...]]] = {}
            for t in center if alive is None else alive:
                index.setdefault(t[i], []).append(t)
            alive = {t for (v,) in db[spec.satellite(i)] for t in index.get(v, ())}
        rows = center if alive is None else alive
        return {t[lo:] for t in rows}
    raise ValueError(f"unknown loop order {loop_order!r}")


def _join_order(q: ConjunctiveQuery, db: Database) -> List[int]:
    """Greedy left-deep order: start from the smallest relation, then keep
    picking the relation sharing the most bound attributes."""
    remaining = set(range(len(q.relations)))
    bound: Set[int] = set()
    order = []
    while remaining:
        def score(r):
            shared = len(bound & set(q.relations[r].attrs))
            return (-shared, len(db[q.relations[r].name]), r)
        nxt = min(remaining, key=score)
        order.append(nxt)
        bound |= set(q.relations[nxt].attrs)
        remaining.remove(nxt)
    return order


def eval_acyclic_naive(db: Database, q: ConjunctiveQuery, cap: int = DEFAULT_JOIN_CAP) -> Set[Tuple[int, ...]]:
    """Full join by left-deep nested loops with hash indexes, then distinct
    projection onto the output attributes in ascending attribute id.

    A Boolean query yields ``{()}`` when satisfiable and ``set()`` otherwise.
    """
    out_attrs = sorted(q.output)
    partial: List[Dict[int, int]] = [{}]
    bound: Set[int] = set()
    produced = 0
    for rid in _join_order(q, db):
        rel = q.relations[rid]
        shared = [i for i, a in enumerate(rel.attrs) if a in bound]
        index: Dict[Tuple[int, ...], List[Tuple[int, ...]]] = {}
        for t in db[rel.name]:
            index.setdefault(tuple(t[i] for i in shared), []).append(t)
        nxt = []
        for b in partial:
            key = tuple(b[rel.attrs[i]] for i in shared)
            for t in index.get(key, ()):
                nb = dict(b)
                for a, v in zip(rel.attrs, t):
                    nb[a] = v
                nxt.append(nb)
                produced += 1
                if produced > cap:
                    raise OracleCapExceeded(f"join produced more than {cap} intermediate tuples")
        partial = nxt
        bound |= set(rel.attrs)
        if not partial:
            return set()
    return {tuple(b[a] for a in out_attrs) for b in partial}


def eval_attribute_join(db: Database, q: ConjunctiveQuery, cap: int = DEFAULT_JOIN_CAP) -> Set[Tuple[int, ...]]:
    """Second, independently structured evaluator: binds one attribute at a
    time in id order, intersecting the candidate values offered by every
    relation that mentions it. Intended for small instances."""
    out_attrs = sorted(q.output)
    rels = [(r.attrs, list(db[r.name])) for r in q.relations]
    results: Set[Tuple[int, ...]] = set()
    steps = 0

    def consistent(binding: Dict[int, int], attrs, t) -> bool:
        return all(binding.get(a, v) == v for a, v in zip(attrs, t))

    def extend(pos: int, binding: Dict[int, int]):
        nonlocal steps
        if pos == q.n_attrs:
            results.add(tuple(binding[a] for a in out_attrs))
            return
        cand: Optional[Set[int]] = None
        for attrs, tuples in rels:
            if pos not in attrs:
                continue
            i = attrs.index(pos)
            vals = {t[i] for t in tuples if consistent(binding, attrs, t)}
            steps += len(tuples)
            cand = vals if cand is None else cand & vals
            if not cand:
                return
        if steps > cap:
            raise OracleCapExceeded(f"attribute join exceeded {cap} steps")
        for v in sorted(cand or ()):
            binding[pos] = v
            extend(pos + 1, binding)
            del binding[pos]

    if any(not tuples for _, tuples in rels):
        return set()
    extend(0, {})
    return results


# ---------------------------------------------------------------------------
# structural parameters by exhaustive search

BRUTE_ATTR_CAP = 10
BRUTE_TREE_REL_CAP = 6


def _edge_sets(q: ConjunctiveQuery) -> List[FrozenSet[int]]:
    return [frozenset(r.attrs) for r in q.relations]


def _is_chordless(edges: List[FrozenSet[int]], seq: Sequence[int]) -> bool:
    if not seq:
        return bool(edges)
    if len(seq) == 1:
        return sum(1 for e in edges if seq[0] in e) >= 2
    for i in range(len(seq) - 1):
        if not any(seq[i] in e and seq[i + 1] in e for e in edges):
            return False
    for i in range(len(seq)):
        for j in range(i + 2, len(seq)):
            if any(seq[i] in e and seq[j] in e for e in edges):
                return False
    first = any(seq[0] in e and seq[1] not in e for e in edges)
    last = any(seq[-1] in e and seq[-2] not in e for e in edges)
    return first and last


def _is_q_chordless(edges: List[FrozenSet[int]], out: FrozenSet[int], seq: Sequence[int]) -> bool:
    """The output attribute on the output endpoint edge behaves like one
    more path vertex: it may not share an edge with any other path vertex,
    and for a single-vertex path the second edge must avoid it."""
    if not seq:
        return any(e & out and e - out for e in edges)
    if any(v in out for v in seq) or not _is_chordless(edges, seq):
        return False
    pset = set(seq)
    for end in {seq[0], seq[-1]}:
        rest = pset - {end}
        for e in edges:
            if e & pset != {end}:
                continue
            for y in e & out:
                if any(y in f and f & rest for f in edges):
                    continue
                if len(seq) > 1 or any(end in f and y not in f for f in edges):
                    return True
    return False


def brute_chordless_lengths(q: ConjunctiveQuery) -> Tuple[int, int]:
    """(longest chordless length, longest q-chordless length or 0)."""
    if q.n_attrs > BRUTE_ATTR_CAP:
        raise OracleCapExceeded(f"brute force limited to {BRUTE_ATTR_CAP} attributes")
    edges = _edge_sets(q)
    out = q.output
    best_c = 1
    best_q = 1 if _is_q_chordless(edges, out, ()) else 0

    def grow(seq: List[int]):
        nonlocal best_c, best_q
        if _is_chordless(edges, seq):
            best_c = max(best_c, len(seq) + 1)
        if _is_q_chordless(edges, out, seq):
            best_q = max(best_q, len(seq) + 1)
        for v in range(q.n_attrs):
            if v in seq:
                continue
            if seq:
                if not any(seq[-1] in e and v in e for e in edges):
                    continue
                if any(v in e and u in e for e in edges for u in seq[:-1]):
                    continue
            seq.append(v)
            grow(seq)
            seq.pop()

    grow([])
    return best_c, best_q


def brute_height(q: ConjunctiveQuery) -> int:
    lc, lq = brute_chordless_lengths(q)
    return max(math.ceil(lc / 2), lq)


def _connected(q: ConjunctiveQuery, vs: FrozenSet[int]) -> bool:
    if not vs:
        return True
    start = min(vs)
    seen = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        for r in q.relations:
            if u in r.attrs:
                for w in r.attrs:
                    if w in vs and w not in seen:
                        seen.add(w)
                        frontier.append(w)
    return seen == set(vs)


def _local_value(q: ConjunctiveQuery, vc: FrozenSet[int], ec: FrozenSet[int]) -> int:
    """Enumerate every key set and every set of extra outputs; a key set
    counts when each key has a remaining relation meeting the chosen
    attributes in that key alone."""
    out = q.output
    star = sorted({a for r in ec for a in q.relations[r].attrs} - vc)
    remaining = [frozenset(q.relations[r].attrs) for r in range(len(q.relations)) if r not in ec]
    best = 0
    for size in range(len(star) + 1):
        for combo in itertools.combinations(star, size):
            keys = frozenset(combo)
            pool = sorted(out & set(star) - keys)
            if vc & out or keys <= out:
                pool = []
            for extra_size in range(len(pool) + 1):
                for extra in itertools.combinations(pool, extra_size):
                    chosen = keys | frozenset(extra)
                    if all(any(rel & chosen == {k} for rel in remaining) for k in keys):
                        best = max(best, len(chosen))
    return best


def brute_local_dimension(q: ConjunctiveQuery, vc: Iterable[int], active: Optional[int] = None) -> int:
    """Local dimension straight from the definition. For the empty subset
    the single active relation must be given."""
    vcs = frozenset(vc)
    if not vcs:
        if active is None:
            raise ValueError("empty connected subset needs an active relation")
        return _local_value(q, vcs, frozenset([active]))
    ec = frozenset(r.id for r in q.relations if vcs & set(r.attrs))
    return _local_value(q, vcs, ec)


def brute_dimension(q: ConjunctiveQuery) -> int:
    """Maximum local dimension over all connected subsets of join
    attributes (and the empty subset with each single active relation),
    floored at 1."""
    if q.n_attrs > BRUTE_ATTR_CAP:
        raise OracleCapExceeded(f"brute force limited to {BRUTE_ATTR_CAP} attributes")
    counts = {a: sum(1 for r in q.relations if a in r.attrs) for a in range(q.n_attrs)}
    join_attrs = [a for a in range(q.n_attrs) if counts[a] >= 2]
    best = max(brute_local_dimension(q, (), r) for r in range(len(q.relations)))
    for size in range(1, len(join_attrs) + 1):
        for combo in itertools.combinations(join_attrs, size):
            vcs = frozenset(combo)
            if _connected(q, vcs):
                best = max(best, brute_local_dimension(q, vcs))
    return max(best, 1)


# ---------------------------------------------------------------------------
# free-connex join trees by exhaustive forest enumeration


def _forest_tree_valid(q: ConjunctiveQuery, parent: Sequence[int]) -> bool:
    """Is there a free-connex join tree whose input-relation part is the
    given forest (parent[r] == -1 means r hangs below the generalized part)?

    The generalized part is the canonical one: for each attribute, the set
    of top-level subtrees that must share it through generalized nodes.
    """
    n = len(q.relations)
    attrs = [frozenset(r.attrs) for r in q.relations]
    out = q.output
    top_of = []
    for r in range(n):
        x = r
        while parent[x] != -1:
            x = parent[x]
        top_of.append(x)
    tops = sorted(set(top_of))
    sub_attrs = {t: frozenset().union(*(attrs[r] for r in range(n) if top_of[r] == t)) for t in tops}

    # node list: ("rel", r) or ("gen", frozenset of tops); tree edges by index
    family: Dict[int, FrozenSet[int]] = {}
    for x in range(q.n_attrs):
        holders = frozenset(t for t in tops if x in sub_attrs[t])
        if len(holders) >= 2 or (len(holders) == 1 and x in out and x in attrs[next(iter(holders))]):
            if any(x not in attrs[t] for t in holders):
                return False
            family[x] = holders
    sets = sorted(set(family.values()), key=lambda s: (len(s), sorted(s)))
    for a, b in itertools.combinations(sets, 2):
        if a & b and not (a <= b or b <= a):
            return False
    gen_attrs = {s: frozenset(x for x, fs in family.items() if fs >= s) for s in sets}

    nodes: List[Tuple[str, object]] = [("gen", None)]
    node_attrs: List[FrozenSet[int]] = [frozenset()]
    par: List[int] = [-1]
    gen_index = {}
    for s in sorted(sets, key=lambda s: -len(s)):
        bigger = [t for t in sets if s < t]
        p = gen_index[min(bigger, key=len)] if bigger else 0
        gen_index[s] = len(nodes)
        nodes.append(("gen", s))
        node_attrs.append(gen_attrs[s])
        par.append(p)
    rel_index = {}
    for r in range(n):
        rel_index[r] = len(nodes)
        nodes.append(("rel", r))
        node_attrs.append(attrs[r])
        par.append(-2)
    for r in range(n):
        if parent[r] == -1:
            holders = [s for s in sets if r in s]
            par[rel_index[r]] = gen_index[min(holders, key=len)] if holders else 0
        else:
            par[rel_index[r]] = rel_index[parent[r]]

    # Guard and "generalized nodes sit inside some relation"
    for i in range(1, len(nodes)):
        p = par[i]
        if nodes[p][0] == "gen" and not node_attrs[p] <= node_attrs[i]:
            return False
        if nodes[i][0] == "gen" and not any(node_attrs[i] <= a for a in attrs):
            return False
    # Connect for every attribute over the whole tree
    for x in range(q.n_attrs):
        holding = [i for i in range(len(nodes)) if x in node_attrs[i]]
        tops_in = [i for i in holding if par[i] == -1 or x not in node_attrs[par[i]]]
        if len(tops_in) != 1:
            return False
    # Connex: maximal root-closed set with output-only overlaps
    in_con = [False] * len(nodes)
    in_con[0] = True
    changed = True
    while changed:
        changed = False
        for i in range(1, len(nodes)):
            if not in_con[i] and in_con[par[i]] and node_attrs[i] & node_attrs[par[i]] <= out:
                in_con[i] = True
                changed = True
    covered = frozenset().union(*(node_attrs[i] for i in range(len(nodes)) if in_con[i]))
    return out <= covered


def _forests(n: int):
    for parent in itertools.product(range(-1, n), repeat=n):
        ok = True
        for r in range(n):
            seen = set()
            x = r
            while x != -1:
                if x in seen or parent[x] == x:
                    ok = False
                    break
                seen.add(x)
                x = parent[x]
            if not ok:
                break
        if ok:
            yield parent


def _forest_height(parent: Sequence[int]) -> int:
    best = 0
    for r in range(len(parent)):
        depth = 0
        x = r
        while x != -1:
            depth += 1
            x = parent[x]
        best = max(best, depth)
    return best


def brute_min_tree_height(q: ConjunctiveQuery) -> Optional[int]:
    """Smallest height over all free-connex join trees, or None if none
    exists. Exponential; limited to small relation counts."""
    n = len(q.relations)
    if n > BRUTE_TREE_REL_CAP:
        raise OracleCapExceeded(f"tree search limited to {BRUTE_TREE_REL_CAP} relations")
    best = None
    for parent in _forests(n):
        h = _forest_height(parent)
        if best is not None and h >= best:
            continue
        if _forest_tree_valid(q, parent):
            best = h
    return best


# ---------------------------------------------------------------------------
# cycles

CYCLE_VERTEX_CAP = 60
CYCLE_LENGTH_CAP = 7


def detect_k_cycle_brute(g, k: int) -> bool:
    """Does the directed graph ``g`` (anything with ``nodes`` and
    ``successors``) contain a simple cycle on exactly ``k`` vertices?"""
    nodes = sorted(g.nodes)
    if len(nodes) > CYCLE_VERTEX_CAP:
        raise OracleCapExceeded(f"cycle search limited to {CYCLE_VERTEX_CAP} vertices")
    if not 3 <= k <= CYCLE_LENGTH_CAP:
        raise OracleCapExceeded(f"cycle length must be within [3, {CYCLE_LENGTH_CAP}]")
    succ = {v: sorted(g.successors(v)) for v in nodes}

    # every cycle is found from its smallest vertex
    def walk(start, v, depth, on_path):
        if depth == k:
            return start in succ[v]
        for w in succ[v]:
            if w > start and w not in on_path:
                on_path.add(w)
                if walk(start, w, depth + 1, on_path):
                    return True
                on_path.discard(w)
        return False

    return any(walk(s, s, 1, {s}) for s in nodes)
