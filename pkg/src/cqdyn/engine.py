"""Heavy/light maintenance of star queries.

The center relation ``R1(x1..xd)`` is split into up to ``2**d`` partitions
by which of its values are heavy. Each partition keeps two views: ``V_S``
(center tuples passing every light satellite) and ``V_C`` (heavy
projections of ``V_S`` whose heavy keys all sit in their satellites).
Heaviness is governed by the generalized H-index, tracked exactly per
dimension with level counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Set, Tuple

from .model import Database, StarQuerySpec, UpdateEvent

Row = Tuple[int, ...]


@dataclass(frozen=True)
class EngineConfig:
    max_d: int = 8
    promote_factor: float = 2.0
    demote_factor: float = 0.5
    rebuild_growth: float = 2.0
    rebuild_shrink: float = 0.5
    instrument: bool = True

    @classmethod
    def parse(cls, text: str) -> "EngineConfig":
        """Read ``key=value`` pairs separated by whitespace, commas or newlines."""
        kinds = {"max_d": int, "promote_factor": float, "demote_factor": float,
                 "rebuild_growth": float, "rebuild_shrink": float, "instrument": _parse_bool}
        values = {}
        for token in text.replace(",", " ").split():
            if "=" not in token:
                raise ValueError(f"expected key=value, got {token!r}")
            key, raw = token.split("=", 1)
            if key not in kinds:
                raise ValueError(f"unknown engine option {key!r}")
            values[key] = kinds[key](raw)
        return cls(**values)


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class UpdateCost:
    """Counted work of a single update."""
    ops: int = 0
    center_scanned: int = 0
    heavy_entries: int = 0
    view_deltas: int = 0
    moved: int = 0
    rebalance_ops: int = 0


@dataclass
class CostMeter:
    updates: int = 0
    noops: int = 0
    ops: int = 0
    rebalance_ops: int = 0
    moved: int = 0
    reclassifications: int = 0
    rebuilds: int = 0
    enumeration_probes: int = 0
    min_reclass_gap: Optional[int] = None
    hysteresis_violations: int = 0
    last: UpdateCost = field(default_factory=UpdateCost)

    def snapshot(self) -> "CostMeter":
        return replace(self, last=replace(self.last))


@dataclass(frozen=True)
class UpdateSummary:
    changed: bool
    cost: UpdateCost
    reclassified: Tuple[Tuple[int, int], ...] = ()
    rebuilt: bool = False


@dataclass(frozen=True)
class RebuildSummary:
    h_before: Tuple[int, ...]
    h_after: Tuple[int, ...]
    taus: Tuple[int, ...]
    keys_changed: int
    moved: int


def integer_root(value: int, exponent: int) -> Optional[int]:
    """``m`` with ``m ** exponent == value``, or None."""
    if value < 1:
        return None
    m = round(value ** (1.0 / exponent))
    for cand in (m - 1, m, m + 1):
        if cand >= 1 and cand ** exponent == value:
            return cand
    return None


def definitional_h(degrees: Iterable[int], d: int) -> int:
    """Largest ``k`` with at least ``k`` values of degree >= ``k**(d-1)``."""
    degs = sorted((g for g in degrees if g > 0), reverse=True)
    if d == 1:
        return len(degs)
    k = 0
    while k < len(degs) and degs[k] >= (k + 1) ** (d - 1):
        k += 1
    return k


class HIndexTracker:
    """Degree map, degree histogram and exact ``h`` for one dimension."""

    def __init__(self, d: int):
        self.d = d
        self.degree: Dict[int, int] = {}
        self.histogram: Dict[int, int] = {}
        self.level: Dict[int, int] = {}
        self.h = 0

    def _hist(self, g: int, delta: int):
        if g <= 0:
            return
        n = self.histogram.get(g, 0) + delta
        if n:
            self.histogram[g] = n
        else:
            del self.histogram[g]

    def increment(self, v: int) -> int:
        g = self.degree.get(v, 0)
        self._hist(g, -1)
        g += 1
        self.degree[v] = g
        self._hist(g, 1)
        if self.d == 1:
            self.h = len(self.degree)
            return g
        m = integer_root(g, self.d - 1)
        if m is not None:
            self.level[m] = self.level.get(m, 0) + 1
            if self.level.get(self.h + 1, 0) >= self.h + 1:
                self.h += 1
        return g

    def decrement(self, v: int) -> int:
        g = self.degree[v]
        self._hist(g, -1)
        if self.d > 1:
            m = integer_root(g, self.d - 1)
            if m is not None:
                self.level[m] -= 1
        g -= 1
        if g:
            self.degree[v] = g
            self._hist(g, 1)
        else:
            del self.degree[v]
        if self.d == 1:
            self.h = len(self.degree)
        elif self.h > 0 and self.level.get(self.h, 0) < self.h:
            self.h -= 1
        return g

    def recompute(self) -> int:
        return definitional_h(self.degree.values(), self.d)


class StarEngine:
    """Maintains ``Q(x_{d-j+1}..x_d) <- R1(x1..xd), R2(x1), .., R_{k+1}(xk)``."""

    def __init__(self, spec: StarQuerySpec, cfg: Optional[EngineConfig] = None):
        cfg = cfg or EngineConfig()
        if spec.d > cfg.max_d:
            raise ValueError(f"dimension {spec.d} exceeds max_d={cfg.max_d}")
        self.spec = spec
        self.cfg = cfg
        d, k = spec.d, spec.k
        self.d, self.k = d, k
        self.meter = CostMeter()
        self.center: Dict[Row, int] = {}
        self.satellite: List[Set[int]] = [set() for _ in range(k)]
        self.by_value: List[Dict[int, Set[Row]]] = [{} for _ in range(d)]
        self.trackers = [HIndexTracker(d) for _ in range(d)]
        self.heavy: List[Set[int]] = [set() for _ in range(d)]
        self.h_last: List[int] = [0] * d
        self.tau: List[int] = [1] * d
        self._sat_ok: Dict[Row, int] = {}
        self._vs: Dict[int, Dict[Row, Set[Row]]] = {}
        self._vc: Dict[int, Set[Row]] = {}
        self._proj_by_value: Dict[Tuple[int, int], Dict[int, Set[Row]]] = {}
        self._dims_cache: Dict[int, Tuple[int, ...]] = {}
        self._touches: Dict[Tuple[int, int], int] = {}
        self._reclassified_once: Set[Tuple[int, int]] = set()
        self._cost = UpdateCost()
        self._sat_mask = (1 << k) - 1

    # -- partitions --------------------------------------------------------

    def _bits(self, t: Row) -> int:
        b = 0
        for i in range(self.d):
            if t[i] in self.heavy[i]:
                b |= 1 << i
        return b

    def _dims(self, b: int) -> Tuple[int, ...]:
        dims = self._dims_cache.get(b)
        if dims is None:
            dims = tuple(i for i in range(self.d) if b >> i & 1)
            self._dims_cache[b] = dims
        return dims

    def _needed(self, b: int) -> int:
        return bin(~b & self._sat_mask).count("1")

    def _heavy_ok(self, p: Row, b: int) -> bool:
        for pos, i in enumerate(self._dims(b)):
            if i < self.k and p[pos] not in self.satellite[i]:
                return False
        return True

    def _vs_add(self, t: Row, b: int):
        p = tuple(t[i] for i in self._dims(b))
        part = self._vs.setdefault(b, {})
        bucket = part.get(p)
        self._cost.view_deltas += 1
        if bucket is None:
            bucket = part[p] = set()
            for pos, i in enumerate(self._dims(b)):
                if i < self.k:
                    self._proj_by_value.setdefault((b, i), {}).setdefault(p[pos], set()).add(p)
            if self._heavy_ok(p, b):
                self._vc.setdefault(b, set()).add(p)
        bucket.add(t)

    def _vs_remove(self, t: Row, b: int):
        p = tuple(t[i] for i in self._dims(b))
        part = self._vs[b]
        bucket = part[p]
        bucket.discard(t)
        self._cost.view_deltas += 1
        if not bucket:
            del part[p]
            for pos, i in enumerate(self._dims(b)):
                if i < self.k:
                    index = self._proj_by_value[(b, i)]
                    holders = index[p[pos]]
                    holders.discard(p)
                    if not holders:
                        del index[p[pos]]
            self._vc.get(b, set()).discard(p)

    def _attach(self, t: Row, b: int):
        count = 0
        for i in range(self.k):
            if not b >> i & 1:
                self._cost.ops += 1
                if t[i] in self.satellite[i]:
                    count += 1
        self._sat_ok[t] = count
        if count == self._needed(b):
            self._vs_add(t, b)

    def _detach(self, t: Row, b: int):
        if self._sat_ok.pop(t) == self._needed(b):
            self._vs_remove(t, b)

    # -- updates -----------------------------------------------------------

    def apply(self, ev: UpdateEvent) -> UpdateSummary:
        spec = self.spec
        self._cost = UpdateCost(ops=1)
        reclassified: List[Tuple[int, int]] = []
        rebuilt = False
        if ev.relation == spec.center:
            if len(ev.tuple) != self.d:
                raise ValueError(f"center tuple must have arity {self.d}: {ev.tuple}")
            changed = self._center_update(ev.tuple, ev.is_insert)
            if changed and self.d > 1:
                for i in range(self.d):
                    key = (i, ev.tuple[i])
                    self._touches[key] = self._touches.get(key, 0) + 1
                for i in range(self.d):
                    v = ev.tuple[i]
                    if self._needs_reclassify(i, v):
                        self.reclassify_key(i, v)
                        reclassified.append((i, v))
        else:
            i = self._satellite_index(ev.relation)
            if len(ev.tuple) != 1:
                raise ValueError(f"satellite tuple must have arity 1: {ev.tuple}")
            changed = self._satellite_update(i, ev.tuple[0], ev.is_insert)
        if changed and self._rebuild_due():
            self.global_rebuild()
            rebuilt = True
        m = self.meter
        m.updates += 1
        if not changed:
            m.noops += 1
        self._cost.ops += self._cost.center_scanned + self._cost.heavy_entries + self._cost.view_deltas
        self._cost.ops += self._cost.rebalance_ops
        m.ops += self._cost.ops
        m.rebalance_ops += self._cost.rebalance_ops
        m.moved += self._cost.moved
        m.last = self._cost
        return UpdateSummary(changed, self._cost, tuple(reclassified), rebuilt)

    def _satellite_index(self, name: str) -> int:
        for i in range(self.k):
            if self.spec.satellite(i) == name:
                return i
        raise KeyError(f"unknown relation {name}")

    def _center_update(self, t: Row, insert: bool) -> bool:
        if insert:
            if t in self.center:
                return False
            b = self._bits(t)
            self.center[t] = b
            for i in range(self.d):
                self.by_value[i].setdefault(t[i], set()).add(t)
                self.trackers[i].increment(t[i])
            self._attach(t, b)
            return True
        b = self.center.pop(t, None)
        if b is None:
            return False
        self._detach(t, b)
        for i in range(self.d):
            holders = self.by_value[i][t[i]]
            holders.discard(t)
            if not holders:
                del self.by_value[i][t[i]]
            self.trackers[i].decrement(t[i])
        return True

    def _satellite_update(self, i: int, v: int, insert: bool) -> bool:
        members = self.satellite[i]
        if insert == (v in members):
            return False
        if insert:
            members.add(v)
        else:
            members.discard(v)
        if v in self.heavy[i]:
            for (b, dim), index in self._proj_by_value.items():
                if dim != i:
                    continue
                for p in index.get(v, ()):
                    self._cost.heavy_entries += 1
                    if insert:
                        if self._heavy_ok(p, b):
                            self._vc.setdefault(b, set()).add(p)
                    elif b in self._vc:
                        self._vc[b].discard(p)
            return True
        for t in self.by_value[i].get(v, ()):
            self._cost.center_scanned += 1
            b = self.center[t]
            need = self._needed(b)
            if insert:
                self._sat_ok[t] += 1
                if self._sat_ok[t] == need:
                    self._vs_add(t, b)
            else:
                if self._sat_ok[t] == need:
                    self._vs_remove(t, b)
                self._sat_ok[t] -= 1
        return True

    # -- rebalancing -------------------------------------------------------

    def _needs_reclassify(self, i: int, v: int) -> bool:
        g = self.trackers[i].degree.get(v, 0)
        if v in self.heavy[i]:
            return g < self.cfg.demote_factor * self.tau[i]
        return g > self.cfg.promote_factor * self.tau[i]

    def reclassify_key(self, i: int, v: int) -> int:
        """Flip the heavy/light label of ``v`` on dimension ``i`` by moving
        every center tuple holding it; returns the number moved."""
        before = self._cost.view_deltas
        rows = list(self.by_value[i].get(v, ()))
        for t in rows:
            self._detach(t, self.center[t])
        if v in self.heavy[i]:
            self.heavy[i].discard(v)
        else:
            self.heavy[i].add(v)
        for t in rows:
            b = self._bits(t)
            self.center[t] = b
            self._attach(t, b)
        moved = len(rows)
        deltas = self._cost.view_deltas - before
        self._cost.view_deltas = before
        self._cost.moved += moved
        # remove + reinsert per tuple, view deltas, and the satellite relabel
        self._cost.rebalance_ops += 2 * moved + deltas + 1
        m = self.meter
        m.reclassifications += 1
        key = (i, v)
        gap = self._touches.get(key, 0)
        if key in self._reclassified_once:
            m.min_reclass_gap = gap if m.min_reclass_gap is None else min(m.min_reclass_gap, gap)
            if gap < math.ceil(self.tau[i] / 2):
                m.hysteresis_violations += 1
        self._reclassified_once.add(key)
        self._touches[key] = 0
        return moved

    def _rebuild_due(self) -> bool:
        if self.d == 1:
            return False
        h_last = max(self.h_last)
        limit = max(1, self.cfg.rebuild_growth * h_last)
        if any(len(keys) >= limit for keys in self.heavy):
            return True
        return h_last >= 1 and self.current_h()[0] <= self.cfg.rebuild_shrink * h_last

    def global_rebuild(self) -> RebuildSummary:
        """Recompute every threshold from the live H-index and move the
        tuples of keys whose label changes."""
        before_h = tuple(self.h_last)
        before = self._cost.view_deltas
        if self.d == 1:
            return RebuildSummary(before_h, before_h, tuple(self.tau), 0, 0)
        new_heavy: List[Set[int]] = []
        scanned = 0
        for i in range(self.d):
            self.h_last[i] = self.trackers[i].h
            self.tau[i] = (self.h_last[i] + 1) ** (self.d - 1)
            keys = set()
            scanned += len(self.trackers[i].degree)
            for v, g in self.trackers[i].degree.items():
                if g >= self.tau[i]:
                    keys.add(v)
            new_heavy.append(keys)
        changed = 0
        affected: Set[Row] = set()
        for i in range(self.d):
            flips = self.heavy[i] ^ new_heavy[i]
            changed += len(flips)
            for v in flips:
                affected.update(self.by_value[i].get(v, ()))
        for t in affected:
            self._detach(t, self.center[t])
        self.heavy = new_heavy
        for t in affected:
            b = self._bits(t)
            self.center[t] = b
            self._attach(t, b)
        deltas = self._cost.view_deltas - before
        self._cost.view_deltas = before
        moved = len(affected)
        self._cost.moved += moved
        self._cost.rebalance_ops += 2 * moved + deltas + scanned + changed
        self._touches.clear()
        self._reclassified_once.clear()
        self.meter.rebuilds += 1
        return RebuildSummary(before_h, tuple(self.h_last), tuple(self.tau), changed, moved)

    # -- reading -----------------------------------------------------------

    def enumerate(self) -> Iterator[Row]:
        """Distinct output tuples of the current result."""
        lo = self.d - self.spec.j
        seen: Set[Row] = set()
        for b in sorted(self._vc):
            part = self._vs.get(b, {})
            for p in self._vc[b]:
                for t in part.get(p, ()):
                    self.meter.enumeration_probes += 1
                    out = t[lo:]
                    if out not in seen:
                        seen.add(out)
                        yield out

    def results(self) -> Set[Row]:
        return set(self.enumerate())

    def current_h(self) -> Tuple[int, Tuple[int, ...]]:
        hs = tuple(tr.h for tr in self.trackers)
        return max(hs, default=0), hs

    def current_tau(self, i: int) -> int:
        return self.tau[i]

    def metrics(self) -> CostMeter:
        return self.meter.snapshot()

    def heavy_keys(self, i: int) -> FrozenSet[int]:
        return frozenset(self.heavy[i])

    def size(self) -> int:
        return len(self.center) + sum(len(s) for s in self.satellite)

    def database(self) -> Database:
        spec = self.spec
        db = Database(spec.to_query())
        db[spec.center].update(self.center)
        for i in range(self.k):
            db[spec.satellite(i)].update((v,) for v in self.satellite[i])
        return db

    def check_h(self) -> List[str]:
        problems = []
        for i, tr in enumerate(self.trackers):
            want = tr.recompute()
            if tr.h != want:
                problems.append(f"h_{i + 1} is {tr.h}, definition gives {want}")
        h = self.current_h()[0]
        if h > 0 and h ** self.d > len(self.center):
            problems.append(f"h={h} exceeds |R1|^(1/d) with |R1|={len(self.center)}")
        return problems

    def check_consistency(self) -> List[str]:
        """Re-derive partitions and both views from scratch and compare."""
        problems = self.check_h()
        d, k = self.d, self.k
        for i in range(d):
            for v in self.heavy[i]:
                g = self.trackers[i].degree.get(v, 0)
                if g < self.cfg.demote_factor * self.tau[i]:
                    problems.append(f"heavy key {v} on x{i + 1} has degree {g}")
            for v, g in self.trackers[i].degree.items():
                if v not in self.heavy[i] and g > self.cfg.promote_factor * self.tau[i]:
                    problems.append(f"light key {v} on x{i + 1} has degree {g}")
        vs_want: Dict[int, Dict[Row, Set[Row]]] = {}
        for t, b in self.center.items():
            if b != self._bits(t):
                problems.append(f"tuple {t} sits in partition {b:b}, expected {self._bits(t):b}")
                continue
            if all(t[i] in self.satellite[i] for i in range(k) if not b >> i & 1):
                p = tuple(t[i] for i in self._dims(b))
                vs_want.setdefault(b, {}).setdefault(p, set()).add(t)
        vs_have = {b: part for b, part in self._vs.items() if part}
        if vs_have != vs_want:
            problems.append("V_S differs from its definition")
        vc_want = {b: {p for p in part if self._heavy_ok(p, b)} for b, part in vs_want.items()}
        vc_want = {b: ps for b, ps in vc_want.items() if ps}
        vc_have = {b: ps for b, ps in self._vc.items() if ps}
        if vc_have != vc_want:
            problems.append("V_C differs from its definition")
        return problems


def new_engine(spec: StarQuerySpec, cfg: Optional[EngineConfig] = None) -> StarEngine:
    return StarEngine(spec, cfg)


def apply_update(st: StarEngine, ev: UpdateEvent) -> UpdateSummary:
    return st.apply(ev)


def enumerate_results(st: StarEngine) -> Iterator[Row]:
    return st.enumerate()


def current_h(st: StarEngine) -> Tuple[int, Tuple[int, ...]]:
    return st.current_h()


def current_tau(st: StarEngine, i: int) -> int:
    return st.current_tau(i)


def metrics(st: StarEngine) -> CostMeter:
    return st.metrics()
