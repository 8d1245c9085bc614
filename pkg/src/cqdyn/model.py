"""Conjunctive queries, their hypergraphs, databases and update streams.

Everything here is immutable after construction except :class:`Database`,
which is the mutable instance an update stream is replayed against.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx

# Domain values are 64-bit integers; the largest one is reserved for the
# distinguished constant used by the reductions.
BOTTOM = 2**63 - 1
INT64_MIN = -(2**63)

MAX_ATTRIBUTES = 64
MAX_RELATIONS = 64


class QuerySpecError(ValueError):
    """Malformed query-spec or update-log document."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Attribute:
    id: int
    name: str


@dataclass(frozen=True)
class RelationSchema:
    id: int
    name: str
    attrs: Tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.attrs)


@dataclass(frozen=True)
class ConjunctiveQuery:
    attributes: Tuple[Attribute, ...]
    relations: Tuple[RelationSchema, ...]
    output: FrozenSet[int]

    def __post_init__(self):
        n_attr = len(self.attributes)
        if n_attr > MAX_ATTRIBUTES:
            raise QuerySpecError(f"at most {MAX_ATTRIBUTES} attributes are supported")
        if len(self.relations) > MAX_RELATIONS:
            raise QuerySpecError(f"at most {MAX_RELATIONS} relations are supported")
        if not self.relations:
            raise QuerySpecError("a query needs at least one relation")
        for i, a in enumerate(self.attributes):
            if a.id != i:
                raise QuerySpecError("attribute ids must be dense and ordered")
        if len({a.name for a in self.attributes}) != n_attr:
            raise QuerySpecError("duplicate attribute name")
        if len({r.name for r in self.relations}) != len(self.relations):
            dup = _first_duplicate(r.name for r in self.relations)
            raise QuerySpecError(f"duplicate relation name {dup!r} (self-joins are not supported)")
        seen = set()
        for i, r in enumerate(self.relations):
            if r.id != i:
                raise QuerySpecError("relation ids must be dense and ordered")
            if not r.attrs:
                raise QuerySpecError(f"relation {r.name} has no attributes")
            if len(set(r.attrs)) != len(r.attrs):
                raise QuerySpecError(f"relation {r.name} repeats an attribute")
            for x in r.attrs:
                if not 0 <= x < n_attr:
                    raise QuerySpecError(f"relation {r.name} references an unknown attribute")
            seen.update(r.attrs)
        if len(seen) != n_attr:
            missing = [a.name for a in self.attributes if a.id not in seen]
            raise QuerySpecError(f"attribute {missing[0]} does not occur in any relation")
        if not self.output <= set(range(n_attr)):
            raise QuerySpecError("output attribute not declared")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def build(cls, relations: Sequence[Tuple[str, Sequence[str]]], output: Iterable[str] = (),
              attr_order: Optional[Sequence[str]] = None) -> "ConjunctiveQuery":
        """Build a query from relation names and attribute names.

        Attribute ids follow ``attr_order`` when given, otherwise the order of
        first appearance.
        """
        names: List[str] = list(attr_order) if attr_order is not None else []
        index = {n: i for i, n in enumerate(names)}
        if len(index) != len(names):
            raise QuerySpecError(f"duplicate attribute {_first_duplicate(names)!r}")
        rels = []
        for rid, (rname, anames) in enumerate(relations):
            ids = []
            for an in anames:
                if an not in index:
                    if attr_order is not None:
                        raise QuerySpecError(f"relation {rname} uses undeclared attribute {an!r}")
                    index[an] = len(names)
                    names.append(an)
                ids.append(index[an])
            rels.append(RelationSchema(rid, rname, tuple(ids)))
        out = set()
        for on in output:
            if on not in index:
                raise QuerySpecError(f"output attribute {on!r} not declared")
            out.add(index[on])
        attrs = tuple(Attribute(i, n) for i, n in enumerate(names))
        return cls(attrs, tuple(rels), frozenset(out))

    # -- accessors ------------------------------------------------------------

    @property
    def n_attrs(self) -> int:
        return len(self.attributes)

    def attr_id(self, name: str) -> int:
        for a in self.attributes:
            if a.name == name:
                return a.id
        raise KeyError(name)

    def attr_name(self, aid: int) -> str:
        return self.attributes[aid].name

    def relation(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(name)

    def relation_id(self, name: str) -> int:
        return self.relation(name).id

    def attrs_of(self, rid: int) -> FrozenSet[int]:
        return frozenset(self.relations[rid].attrs)

    def relations_with(self, aid: int) -> FrozenSet[int]:
        """E[x]: ids of relations whose schema contains attribute ``aid``."""
        return frozenset(r.id for r in self.relations if aid in r.attrs)

    def names(self, aids: Iterable[int]) -> List[str]:
        return [self.attributes[a].name for a in sorted(aids)]

    def rel_names(self, rids: Iterable[int]) -> List[str]:
        return [self.relations[r].name for r in sorted(rids)]

    @property
    def is_boolean(self) -> bool:
        return not self.output

    @property
    def is_full(self) -> bool:
        return len(self.output) == self.n_attrs

    def induced(self, rids: Iterable[int]) -> "ConjunctiveQuery":
        """Sub-query over the given relations; unused attributes are dropped
        and ids are re-densified, keeping names and relative order."""
        keep = sorted(set(rids))
        used = sorted({x for r in keep for x in self.relations[r].attrs})
        remap = {old: new for new, old in enumerate(used)}
        attrs = tuple(Attribute(remap[a], self.attributes[a].name) for a in used)
        rels = tuple(
            RelationSchema(i, self.relations[r].name, tuple(remap[x] for x in self.relations[r].attrs))
            for i, r in enumerate(keep)
        )
        out = frozenset(remap[a] for a in self.output if a in remap)
        return ConjunctiveQuery(attrs, rels, out)

    def with_output(self, output_names: Iterable[str]) -> "ConjunctiveQuery":
        out = frozenset(self.attr_id(n) for n in output_names)
        return ConjunctiveQuery(self.attributes, self.relations, out)

    def __str__(self) -> str:
        return serialize_query(self)


def _first_duplicate(items: Iterable[str]) -> Optional[str]:
    seen = set()
    for it in items:
        if it in seen:
            return it
        seen.add(it)
    return None


# ---------------------------------------------------------------------------
# query-spec documents

_NAME = r"[A-Za-z_][A-Za-z0-9_']*"
_ATOM_RE = re.compile(rf"\s*({_NAME})\s*\(([^()]*)\)\s*")
_RULE_SPLIT = re.compile(r"<-|:-|←")


def _split_names(body: str, line_no: int, col: int) -> List[str]:
    body = body.strip()
    if not body:
        return []
    out = []
    for part in body.split(","):
        name = part.strip()
        if not re.fullmatch(_NAME, name):
            raise QuerySpecError(f"bad attribute name {name!r}", line_no, col)
        out.append(name)
    return out


def _parse_atoms(text: str, line_no: int, col0: int) -> List[Tuple[str, List[str]]]:
    atoms = []
    pos = 0
    text = text.rstrip().rstrip(".")
    while pos < len(text):
        m = _ATOM_RE.match(text, pos)
        if not m:
            raise QuerySpecError("expected relation atom Name(x, ...)", line_no, col0 + pos + 1)
        atoms.append((m.group(1), _split_names(m.group(2), line_no, col0 + m.start(2) + 1)))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise QuerySpecError("expected ',' between atoms", line_no, col0 + pos + 1)
            pos += 1
    return atoms


def parse_query(text: str) -> ConjunctiveQuery:
    """Parse a query-spec document.

    Two layouts are accepted. The line layout::

        attrs: x1 x2 x3
        output: x3
        R1(x1, x2)
        R2(x2, x3)

    and the rule layout ``Q(x3) <- R1(x1, x2), R2(x2, x3)``, which may span
    several lines. ``#`` starts a comment in both.
    """
    attr_order: Optional[List[str]] = None
    output: Optional[List[str]] = None
    relations: List[Tuple[str, List[str]]] = []
    rule_buf: List[Tuple[int, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        low = stripped.lower()
        if low.startswith("attrs:"):
            if attr_order is not None:
                raise QuerySpecError("attrs declared twice", line_no, indent + 1)
            attr_order = stripped[6:].replace(",", " ").split()
            for n in attr_order:
                if not re.fullmatch(_NAME, n):
                    raise QuerySpecError(f"bad attribute name {n!r}", line_no, indent + 1)
        elif low.startswith("output:"):
            if output is not None:
                raise QuerySpecError("output declared twice", line_no, indent + 1)
            output = stripped[7:].replace(",", " ").split()
        elif rule_buf or _RULE_SPLIT.search(stripped):
            rule_buf.append((line_no, line))
        else:
            atoms = _parse_atoms(line, line_no, 0)
            if len(atoms) != 1:
                raise QuerySpecError("one relation per line expected", line_no, indent + 1)
            relations.extend(atoms)
    if rule_buf:
        if relations:
            raise QuerySpecError("cannot mix rule layout with relation lines", rule_buf[0][0], 1)
        first_line = rule_buf[0][0]
        joined = " ".join(l for _, l in rule_buf)
        parts = _RULE_SPLIT.split(joined)
        if len(parts) != 2:
            raise QuerySpecError("expected exactly one '<-' in rule", first_line, 1)
        head = _parse_atoms(parts[0], first_line, 0)
        if len(head) != 1:
            raise QuerySpecError("rule head must be a single atom", first_line, 1)
        if output is not None:
            raise QuerySpecError("output given both by 'output:' and the rule head", first_line, 1)
        output = head[0][1]
        relations = _parse_atoms(parts[1], first_line, len(parts[0]) + 2)
    if not relations:
        raise QuerySpecError("no relations found", 1, 1)
    return ConjunctiveQuery.build(relations, output or [], attr_order)


def serialize_query(q: ConjunctiveQuery) -> str:
    lines = [
        "attrs: " + " ".join(a.name for a in q.attributes),
        "output: " + " ".join(q.attributes[a].name for a in sorted(q.output)),
    ]
    for r in q.relations:
        lines.append(f"{r.name}(" + ", ".join(q.attributes[x].name for x in r.attrs) + ")")
    return "\n".join(lines) + "\n"


def rule_text(q: ConjunctiveQuery, head: str = "Q") -> str:
    out = ", ".join(q.attributes[a].name for a in sorted(q.output))
    body = ", ".join(
        f"{r.name}(" + ", ".join(q.attributes[x].name for x in r.attrs) + ")" for r in q.relations
    )
    return f"{head}({out}) <- {body}"


# ---------------------------------------------------------------------------
# hypergraph views


@dataclass(frozen=True)
class Hypergraph:
    vertices: FrozenSet[int]
    edges: Tuple[Tuple[int, FrozenSet[int]], ...]
    unique_vertices: FrozenSet[int]

    def edge(self, eid: int) -> FrozenSet[int]:
        return self.edges[eid][1]

    def edges_with(self, v: int) -> List[int]:
        return [eid for eid, vs in self.edges if v in vs]


def build_hypergraph(q: ConjunctiveQuery) -> Hypergraph:
    edges = tuple((r.id, frozenset(r.attrs)) for r in q.relations)
    counts: Dict[int, int] = {}
    for _, vs in edges:
        for v in vs:
            counts[v] = counts.get(v, 0) + 1
    unique = frozenset(v for v, c in counts.items() if c == 1)
    return Hypergraph(frozenset(range(q.n_attrs)), edges, unique)


def primal_graph(h: Hypergraph, subset: Optional[Iterable[int]] = None) -> nx.Graph:
    """Primal graph restricted to ``subset`` (all vertices when omitted)."""
    keep = set(h.vertices if subset is None else subset)
    if not keep <= h.vertices:
        raise ValueError("subset must be drawn from the hypergraph's vertices")
    g = nx.Graph()
    g.add_nodes_from(sorted(keep))
    for _, vs in h.edges:
        inside = sorted(vs & keep)
        for i, u in enumerate(inside):
            for v in inside[i + 1:]:
                g.add_edge(u, v)
    return g


# ---------------------------------------------------------------------------
# values, tuples, databases

Value = int
Row = Tuple[int, ...]


def format_value(v: int) -> str:
    return "_" if v == BOTTOM else str(v)


def parse_value(tok: str) -> int:
    if tok == "_":
        return BOTTOM
    v = int(tok)
    if not INT64_MIN <= v < BOTTOM:
        raise ValueError(f"value {tok} outside the 64-bit domain")
    return v


def format_row(row: Sequence[int]) -> str:
    return " ".join(format_value(v) for v in row)


def result_digest(rows: Iterable[Sequence[int]]) -> str:
    """Stable hash of a result set, order independent."""
    return hashlib.sha256(canonical_listing(rows).encode()).hexdigest()[:16]


def canonical_listing(rows: Iterable[Sequence[int]]) -> str:
    """One result tuple per line, sorted numerically; used for golden dumps."""
    return "".join(format_row(r) + "\n" for r in sorted(rows))


@dataclass(frozen=True)
class UpdateEvent:
    op: str  # "+" or "-"
    relation: str
    tuple: Row

    def __post_init__(self):
        if self.op not in ("+", "-"):
            raise ValueError(f"unknown update op {self.op!r}")

    @property
    def is_insert(self) -> bool:
        return self.op == "+"

    def to_line(self) -> str:
        vals = format_row(self.tuple)
        return f"{self.op} {self.relation} {vals}".rstrip()


@dataclass(frozen=True)
class Checkpoint:
    """Enumeration point. ``expected`` is a result count, a yes/no answer,
    or None when only the digest (or nothing) is checked."""

    expected: Union[int, bool, None] = None
    digest: Optional[str] = None

    def to_line(self) -> str:
        parts = ["?"]
        if isinstance(self.expected, bool):
            parts.append("true" if self.expected else "false")
        elif self.expected is not None:
            parts.append(str(self.expected))
        if self.digest:
            parts.append(f"sha={self.digest}")
        return " ".join(parts)


Step = Union[UpdateEvent, Checkpoint]


class Database:
    """Set-semantics instance: relation name -> set of tuples."""

    def __init__(self, q: Optional[ConjunctiveQuery] = None, arities: Optional[Dict[str, int]] = None):
        self.arity: Dict[str, int] = {}
        if q is not None:
            self.arity.update({r.name: r.arity for r in q.relations})
        if arities:
            self.arity.update(arities)
        self.rel: Dict[str, set] = {name: set() for name in self.arity}

    def __getitem__(self, name: str) -> set:
        return self.rel[name]

    def size(self) -> int:
        return sum(len(s) for s in self.rel.values())

    def apply(self, ev: UpdateEvent) -> bool:
        """Apply one update; return True if the instance changed."""
        if ev.relation not in self.rel:
            raise KeyError(f"unknown relation {ev.relation}")
        if len(ev.tuple) != self.arity[ev.relation]:
            raise ValueError(f"arity mismatch for {ev.relation}: {ev.tuple}")
        s = self.rel[ev.relation]
        if ev.is_insert:
            if ev.tuple in s:
                return False
            s.add(ev.tuple)
            return True
        if ev.tuple not in s:
            return False
        s.remove(ev.tuple)
        return True

    def insert(self, name: str, row: Sequence[int]) -> bool:
        return self.apply(UpdateEvent("+", name, tuple(row)))

    def delete(self, name: str, row: Sequence[int]) -> bool:
        return self.apply(UpdateEvent("-", name, tuple(row)))

    def copy(self) -> "Database":
        other = Database(arities=dict(self.arity))
        other.rel = {k: set(v) for k, v in self.rel.items()}
        return other


# ---------------------------------------------------------------------------
# update-log documents


@dataclass
class UpdateLog:
    header: Dict[str, str] = field(default_factory=dict)
    query_lines: List[str] = field(default_factory=list)
    steps: List[Step] = field(default_factory=list)


def parse_step(line: str, line_no: int = 0) -> Optional[Step]:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    toks = body.split()
    op = toks[0]
    if op == "?":
        expected: Union[int, bool, None] = None
        digest = None
        for t in toks[1:]:
            if t.startswith("sha="):
                digest = t[4:]
            elif t in ("true", "yes"):
                expected = True
            elif t in ("false", "no"):
                expected = False
            else:
                try:
                    expected = int(t)
                except ValueError:
                    raise QuerySpecError(f"bad checkpoint token {t!r}", line_no, 1) from None
        return Checkpoint(expected, digest)
    if op in ("+", "-"):
        if len(toks) < 2:
            raise QuerySpecError("update without relation name", line_no, 1)
        try:
            vals = tuple(parse_value(t) for t in toks[2:])
        except ValueError as exc:
            raise QuerySpecError(str(exc), line_no, 1) from None
        return UpdateEvent(op, toks[1], vals)
    raise QuerySpecError(f"unknown update-log line {body!r}", line_no, 1)


def parse_update_log(text: str) -> UpdateLog:
    log = UpdateLog()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("#q "):
            log.query_lines.append(s[3:])
            continue
        if s.startswith("#") and "=" in s and not log.steps:
            for tok in s[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    log.header[k] = v
            continue
        step = parse_step(raw, line_no)
        if step is not None:
            log.steps.append(step)
    return log


def format_update_log(log: UpdateLog) -> str:
    out = []
    if log.header:
        out.append("# " + " ".join(f"{k}={v}" for k, v in log.header.items()))
    out.extend("#q " + l for l in log.query_lines)
    out.extend(s.to_line() for s in log.steps)
    return "\n".join(out) + "\n"


def iter_events(steps: Iterable[Step]) -> Iterator[UpdateEvent]:
    for s in steps:
        if isinstance(s, UpdateEvent):
            yield s


# ---------------------------------------------------------------------------
# star queries


@dataclass(frozen=True)
class StarQuerySpec:
    """Center ``R1(x1..xd)`` with satellites ``R2(x1) .. R{k+1}(xk)``;
    the output is the last ``j`` center attributes."""

    d: int
    k: int
    j: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("star dimension must be at least 1")
        if not 0 <= self.d - self.j <= self.k <= self.d:
            raise ValueError(f"need 0 <= d-j <= k <= d, got d={self.d} k={self.k} j={self.j}")

    @property
    def center(self) -> str:
        return "R1"

    def satellite(self, i: int) -> str:
        """Name of the satellite joining on center position ``i`` (0-based)."""
        return f"R{i + 2}"

    @property
    def satellites(self) -> List[str]:
        return [self.satellite(i) for i in range(self.k)]

    @property
    def output_positions(self) -> Tuple[int, ...]:
        return tuple(range(self.d - self.j, self.d))

    @property
    def is_boolean(self) -> bool:
        return self.j == 0

    def to_query(self) -> ConjunctiveQuery:
        names = [f"x{i + 1}" for i in range(self.d)]
        rels = [(self.center, names)] + [(self.satellite(i), [names[i]]) for i in range(self.k)]
        return ConjunctiveQuery.build(rels, names[self.d - self.j:], names)

    def header(self) -> Dict[str, str]:
        return {"d": str(self.d), "k": str(self.k), "j": str(self.j)}


def star_spec_of(q: ConjunctiveQuery) -> Optional[StarQuerySpec]:
    """Recognize a query in star shape (relation names as produced by
    :meth:`StarQuerySpec.to_query`); None if it is not one."""
    try:
        center = q.relation("R1")
    except KeyError:
        return None
    d = center.arity
    k = len(q.relations) - 1
    if k > d:
        return None
    for i in range(k):
        try:
            sat = q.relation(f"R{i + 2}")
        except KeyError:
            return None
        if sat.attrs != (center.attrs[i],):
            return None
    out_pos = sorted(center.attrs.index(a) for a in q.output)
    j = len(out_pos)
    if out_pos != list(range(d - j, d)):
        return None
    try:
        return StarQuerySpec(d, k, j)
    except ValueError:
        return None
