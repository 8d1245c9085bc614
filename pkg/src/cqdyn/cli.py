"""Command-line entry point: analyze, run, verify, bench, gen.

Exit codes: 0 all checks pass, 1 a verification mismatch, 2 usage or
parse error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO

from . import analyzer, oracle, workload
from .engine import EngineConfig, StarEngine
from .model import QuerySpecError, StarQuerySpec, UpdateEvent, parse_query, result_digest

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2

RUN_COLUMNS = ["step", "kind", "relation", "db_size", "h", "ops", "rows", "expected", "pass"]
BENCH_COLUMNS = ["update", "db_size", "h", "ops"]


class UsageError(Exception):
    pass


def resolve_seed(explicit: Optional[int], *params) -> int:
    """Explicit seed, else CQDYN_SEED, else a hash of the parameters."""
    if explicit is not None:
        return explicit
    env = os.environ.get("CQDYN_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CQDYN_SEED must be an integer, got {env!r}") from None
    digest = hashlib.sha256(repr(params).encode()).hexdigest()
    return int(digest[:8], 16)


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _engine_config(pairs: Sequence[str]) -> EngineConfig:
    try:
        return EngineConfig.parse(" ".join(pairs))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad engine option: {exc}") from None


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args, out: TextIO) -> int:
    q = parse_query(_read(args.query))
    h = analyzer.height(q)
    d = analyzer.dimension(q)
    cls = analyzer.classify(q)
    problems = analyzer.verify_chordless_witness(q, h.max_chordless)
    if h.max_q_chordless:
        problems += analyzer.verify_chordless_witness(q, h.max_q_chordless)
    if args.csv:
        w = csv.writer(out)
        w.writerow(["class", "height", "dimension", "chordless", "q_chordless", "free_connex"])
        w.writerow([cls, h.height, d.dimension, h.chordless_length, h.q_chordless_length,
                    str(analyzer.is_free_connex(q)).lower()])
    else:
        out.write(f"height={h.height} dim={d.dimension} class={cls}\n")
        out.write(analyzer.render_report(q) + "\n")
        if analyzer.is_free_connex(q):
            tree = analyzer.build_free_connex_join_tree(q)
            verdict = analyzer.validate_join_tree(q, tree)
            out.write(f"tree_height={verdict.height} tree_valid={str(not verdict.problems).lower()}\n")
            problems += list(verdict.problems)
            if args.tree:
                out.write(analyzer.render_tree(q, tree) + "\n")
    for p in problems:
        print(f"witness check failed: {p}", file=sys.stderr)
    return EXIT_MISMATCH if problems else EXIT_OK


# ---------------------------------------------------------------------------
# run


@dataclass
class RunReport:
    rows: List[list] = field(default_factory=list)
    checkpoints: int = 0
    passed: int = 0
    updates: int = 0
    ops: int = 0
    rebuilds: int = 0
    reclassifications: int = 0
    h_trajectory: List[int] = field(default_factory=list)
    wall: float = 0.0
    first_divergence: Optional[str] = None

    @property
    def amortized(self) -> float:
        return self.ops / self.updates if self.updates else 0.0

    def summary(self) -> str:
        return (f"checkpoints={self.checkpoints} passed={self.passed} updates={self.updates}"
                f" amortized_ops={self.amortized:.3f} rebuilds={self.rebuilds}"
                f" reclassifications={self.reclassifications} wall={self.wall:.3f}s")


def replay_engine(script: workload.WorkloadScript, cfg: Optional[EngineConfig] = None,
                  record: bool = True) -> RunReport:
    spec = script.star
    if spec is None:
        raise UsageError("script does not target a star query")
    eng = StarEngine(spec, cfg)
    rep = RunReport()
    start = time.perf_counter()
    for step_no, s in enumerate(script.steps):
        if isinstance(s, UpdateEvent):
            eng.apply(s)
            rep.updates += 1
            h = eng.current_h()[0]
            rep.h_trajectory.append(h)
            if record:
                rep.rows.append([step_no, "update", s.relation, eng.size(), h,
                                 eng.meter.last.ops, "", "", ""])
            continue
        rows = workload.apply_filter(eng.enumerate(), script.filters.get(rep.checkpoints))
        ok = workload.checkpoint_holds(s, rows)
        rep.checkpoints += 1
        rep.passed += ok
        if not ok and rep.first_divergence is None:
            rep.first_divergence = (f"checkpoint {rep.checkpoints - 1} at step {step_no}: expected"
                                    f" {s.to_line()}, engine gave {len(rows)} rows sha={result_digest(rows)}")
        if record:
            rep.rows.append([step_no, "checkpoint", "", eng.size(), eng.current_h()[0], "",
                             len(rows), s.to_line(), str(ok).lower()])
    m = eng.metrics()
    rep.ops, rep.rebuilds, rep.reclassifications = m.ops, m.rebuilds, m.reclassifications
    rep.wall = time.perf_counter() - start
    return rep


def cmd_run(args, out: TextIO) -> int:
    try:
        script = workload.WorkloadScript.from_text(_read(args.script))
    except (QuerySpecError, ValueError) as exc:
        raise UsageError(f"cannot parse script: {exc}") from None
    rep = replay_engine(script, _engine_config(args.config))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_COLUMNS)
            w.writerows(rep.rows)
    out.write(rep.summary() + "\n")
    if rep.first_divergence:
        print("first divergence: " + rep.first_divergence, file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def verify_equivalence(attrs: int, trials: int, seed: int) -> List[str]:
    """q-hierarchical <=> height 1 <=> dimension 1, plus analyzer = brute force."""
    rng = random.Random(seed)
    failures = []
    for t in range(trials):
        q = workload.random_free_connex_query(rng, attrs, 6)
        qh = analyzer.is_q_hierarchical(q)
        h = analyzer.height(q).height
        d = analyzer.dimension(q).dimension
        if not qh == (h == 1) == (d == 1):
            failures.append(f"trial {t}: q_hierarchical={qh} height={h} dim={d} for {q}")
        if q.n_attrs <= 7:
            if h != oracle.brute_height(q) or d != oracle.brute_dimension(q):
                failures.append(f"trial {t}: analyzer disagrees with brute force on {q}")
    return failures


def verify_engine_stream(d: int, events: int, seed: int, check_h_every: int = 1) -> List[str]:
    spec = StarQuerySpec(d, d, min(d, 1))
    script = workload.gen_random(spec, events, max(4, int(events ** (1 / d)) * 2), "zipf:1.1", seed)
    return verify_engine_script(script, check_h_every)


def verify_engine_script(script: workload.WorkloadScript, check_h_every: int = 1) -> List[str]:
    spec = script.star
    if spec is None:
        raise UsageError("script does not target a star query")
    eng = StarEngine(spec)
    db = workload.Database(script.query)
    failures = []
    idx = 0
    for n, s in enumerate(script.steps):
        if isinstance(s, UpdateEvent):
            eng.apply(s)
            db.apply(s)
            if check_h_every and n % check_h_every == 0:
                failures += [f"step {n}: {p}" for p in eng.check_h()]
            continue
        got = workload.apply_filter(eng.enumerate(), script.filters.get(idx))
        want = workload.apply_filter(oracle.eval_star_naive(db, spec), script.filters.get(idx))
        if got != want:
            failures.append(f"checkpoint {idx}: engine {len(got)} rows, oracle {len(want)} rows")
        if not workload.checkpoint_holds(s, want):
            failures.append(f"checkpoint {idx}: oracle contradicts the embedded expectation")
        idx += 1
    failures += eng.check_consistency()
    return failures


def cmd_verify(args, out: TextIO) -> int:
    if not (args.equivalence or args.engine):
        raise UsageError("verify needs --equivalence and/or --engine")
    failures: List[str] = []
    if args.equivalence:
        seed = resolve_seed(args.seed, "equivalence", args.attrs, args.trials)
        out.write(f"seed={seed}\n")
        chunks = max(1, args.workers)
        per = [args.trials // chunks + (i < args.trials % chunks) for i in range(chunks)]
        with ThreadPoolExecutor(chunks) as pool:
            parts = pool.map(lambda i: verify_equivalence(args.attrs, per[i], seed + i), range(chunks))
        eq = [f for part in parts for f in part]
        out.write(f"equivalence: trials={args.trials} violations={len(eq)}\n")
        failures += eq
    if args.engine:
        if args.script:
            script = workload.WorkloadScript.from_text(_read(args.script))
            eng = verify_engine_script(script)
            out.write(f"engine: script={args.script} mismatches={len(eng)}\n")
        else:
            seed = resolve_seed(args.seed, "engine", args.d, args.events)
            out.write(f"seed={seed}\n")
            eng = verify_engine_stream(args.d, args.events, seed)
            out.write(f"engine: d={args.d} events={args.events} mismatches={len(eng)}\n")
        failures += eng
    for f in failures[:20]:
        print(f, file=sys.stderr)
    out.write("PASS\n" if not failures else "FAIL\n")
    return EXIT_MISMATCH if failures else EXIT_OK


# ---------------------------------------------------------------------------
# bench


def bench_rows(script: workload.WorkloadScript, every: int = 1):
    spec = script.star
    eng = StarEngine(spec)
    for n, ev in enumerate(script.events(), start=1):
        eng.apply(ev)
        if n % every == 0:
            yield [n, eng.size(), eng.current_h()[0], eng.meter.last.ops]


def cmd_bench(args, out: TextIO) -> int:
    seed = resolve_seed(args.seed, "bench", args.d, args.events, args.dist)
    spec = StarQuerySpec(args.d, args.d, 0)
    if args.dist == "oumv":
        script = workload.adversarial_oumv_stream(spec, args.side, args.events, seed)
    else:
        script = workload.gen_random(spec, args.events, args.domain, args.dist, seed, oracle=False)
    print(f"seed={seed}", file=sys.stderr)
    sink = open(args.output, "w", newline="") if args.output else out
    try:
        w = csv.writer(sink)
        w.writerow(BENCH_COLUMNS)
        total = updates = 0
        for row in bench_rows(script, 1):
            total += row[3]
            updates += 1
            if row[0] % args.every == 0:
                w.writerow(row)
    finally:
        if sink is not out:
            sink.close()
    print(f"updates={updates} mean_ops={total / max(updates, 1):.3f}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args, out: TextIO) -> int:
    seed = resolve_seed(args.seed, "gen", args.kind, args.n, args.d, args.events)
    rng = random.Random(seed)
    if args.kind == "random":
        spec = StarQuerySpec(args.d, args.k if args.k is not None else args.d, args.j)
        script = workload.gen_random(spec, args.events, args.n, args.dist, seed)
    elif args.kind == "oumv-star":
        spec = StarQuerySpec(args.d, args.d, 0)
        m = oracle.BoolTensor.random(args.d, args.n, args.density, rng)
        script = workload.encode_oumv_star(m, workload.random_rounds(args.n, args.d, args.rounds, rng), spec, seed)
    elif args.kind == "oumv-general":
        if not args.query:
            raise UsageError("oumv-general needs --query")
        q = parse_query(_read(args.query))
        rep = analyzer.dimension(q)
        m = oracle.BoolTensor.random(rep.dimension, args.n, args.density, rng)
        rounds = workload.random_rounds(args.n, rep.dimension, args.rounds, rng)
        script = workload.encode_oumv_general(q, rep, m, rounds, seed)
    else:
        raise UsageError(f"unknown generator {args.kind!r}")
    text = script.to_text()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"seed={seed} wrote {args.output}", file=sys.stderr)
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cqdyn", description="Analyze conjunctive queries and maintain star queries.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="classify a query and print its witnesses")
    a.add_argument("query")
    a.add_argument("--csv", action="store_true")
    a.add_argument("--tree", action="store_true", help="render the free-connex join tree")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("run", help="replay a script through the star engine")
    r.add_argument("script")
    r.add_argument("--config", nargs="*", default=[], metavar="KEY=VALUE")
    r.add_argument("--csv", metavar="PATH", help="write the per-step report here")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="oracle cross-checks")
    v.add_argument("--equivalence", action="store_true")
    v.add_argument("--attrs", type=int, default=8)
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--engine", action="store_true")
    v.add_argument("--script")
    v.add_argument("--d", type=int, default=3)
    v.add_argument("--events", type=int, default=5000)
    v.add_argument("--seed", type=int)
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="amortized cost CSV")
    b.add_argument("--d", type=int, default=3)
    b.add_argument("--events", type=int, default=100000)
    b.add_argument("--domain", type=int, default=10000)
    b.add_argument("--dist", default="uniform", help="uniform, zipf:<s> or oumv")
    b.add_argument("--side", type=int, default=16, help="tensor side for the oumv stream")
    b.add_argument("--every", type=int, default=1, help="emit every n-th update")
    b.add_argument("--seed", type=int)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen", help="write a workload script")
    g.add_argument("kind", choices=["random", "oumv-star", "oumv-general"])
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--k", type=int)
    g.add_argument("--j", type=int, default=0)
    g.add_argument("--n", type=int, default=8, help="domain size or tensor side")
    g.add_argument("--events", type=int, default=1000)
    g.add_argument("--rounds", type=int, default=20)
    g.add_argument("--density", type=float, default=0.3)
    g.add_argument("--dist", default="uniform")
    g.add_argument("--query")
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[Sequence[str]] = None, out: TextIO = None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuerySpecError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
