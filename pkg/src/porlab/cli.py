"""Command line: ``porlab explore | bench | gen``.

Exit codes: 0 exhausted (and oracle pass), 1 violation found, 2 program
error, deadlock or unfinished run, 3 oracle failure, 4 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys

from porlab.explore import Mode, StrategyConfig, Verdict
from porlab.harness import bench
from porlab.harness.clients import Bug, ClientSpec, NoBuggyClient, Structure, generate_client
from porlab.oracle import BudgetExceeded, check_soundness
from porlab.program import ProgramFormatError, load_program

EXIT_OK, EXIT_VIOLATION, EXIT_PROGRAM, EXIT_ORACLE, EXIT_USAGE = 0, 1, 2, 3, 4

_VERDICT_EXIT = {
    Verdict.EXHAUSTED: EXIT_OK,
    Verdict.VIOLATION: EXIT_VIOLATION,
    Verdict.DEADLOCK: EXIT_PROGRAM,
    Verdict.PROGRAM_ERROR: EXIT_PROGRAM,
    Verdict.TIMEOUT: EXIT_PROGRAM,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _strategy(text: str) -> StrategyConfig:
    try:
        return StrategyConfig.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="porlab", description="Partial-order-reduction model checker for small concurrent programs.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("explore", help="explore one program document")
    ex.add_argument("program")
    ex.add_argument("--alg", choices=sorted(bench.ALIASES), default="dl")
    ex.add_argument("--strategy", type=_strategy, default=StrategyConfig(), help="seq, seq:<perm> or rand:<seed>")
    ex.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.EXHAUSTIVE.value)
    ex.add_argument("--oracle", action="store_true", help="check the reduced LTS against brute force")
    ex.add_argument("--dump-lts", metavar="PATH", help="write the explored edges as JSON lines")
    ex.add_argument("--report", choices=["csv", "json"], help="print a machine-readable report")
    ex.add_argument("--timeout", type=float, default=None, help="seconds")

    be = sub.add_parser("bench", help="run an experiment matrix")
    be.add_argument("--corpus", default="builtin", help="'builtin' or a directory of program documents")
    be.add_argument("--matrix", help="JSON run configuration matrix")
    be.add_argument("--out", required=True, help="report path (.csv or .json)")
    be.add_argument("--jobs", type=int, default=1)

    ge = sub.add_parser("gen", help="generate a client program")
    ge.add_argument("--structure", required=True, choices=[s.value for s in Structure])
    ge.add_argument("--threads", type=int, default=3)
    ge.add_argument("--calls", type=int, default=2)
    ge.add_argument("--keys", type=int, default=2)
    ge.add_argument("--bug", choices=[b.value for b in Bug], default=Bug.NONE.value)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--out", help="output path (default: stdout)")
    return ap


def _explore(args) -> int:
    try:
        p = load_program(args.program)
    except (OSError, ProgramFormatError) as exc:
        raise UsageError(str(exc))
    if p.name is None:
        p = type(p)(p.objects, p.threads, p.spec, name=args.program)
    try:
        cfg = bench.RunConfig(args.alg, args.strategy, args.mode, args.timeout)
        cfg.strategy.validate(p.num_threads)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = bench.EXPLORERS[cfg.algorithm](p, cfg.strategy, cfg.mode, timeout=cfg.timeout)
    if args.dump_lts:
        out.lts.dump(args.dump_lts)
    code = _VERDICT_EXIT[out.verdict]
    report = None
    if args.oracle and bench.lts_is_complete(out, cfg.mode):
        try:
            report = check_soundness(p, out.lts)
        except BudgetExceeded as exc:
            print(f"oracle skipped: {exc}", file=sys.stderr)
        else:
            if not report.passed:
                code = EXIT_ORACLE
    row = bench.make_row(p, cfg, out, report)
    m = out.metrics
    if args.report == "csv":
        sys.stdout.write(bench.to_csv([row]))
    elif args.report == "json":
        doc = {"row": row, "trace": None if out.trace is None else [str(a) for a in out.trace],
               "fault": out.fault, "outcome": None if out.outcome is None else list(out.outcome),
               "soundness": None if report is None else report.to_json()}
        print(json.dumps(doc, indent=2))
    else:
        print(f"{cfg.algorithm} {p.name}: {row['verdict']}, {m.states} states, "
              f"{m.transitions} transitions, {m.retraversed} re-traversed, {row['time_ms']} ms")
        if out.trace is not None and out.verdict is not Verdict.EXHAUSTED:
            print("trace: " + " ".join(str(a) for a in out.trace))
        if out.outcome is not None:
            print(f"outcome {list(out.outcome)} is not admitted")
        if out.fault:
            print(f"fault: {out.fault}")
        if report is not None:
            print(f"oracle: {row['oracle']} ({report.full_classes} classes, ratio {report.ratio:.3f})")
            for cls in report.missing:
                print("missing: " + " ".join(cls))
    return code


def _bench(args) -> int:
    try:
        corpus = bench.load_corpus(args.corpus)
        configs = bench.load_matrix(args.matrix) if args.matrix else [
            bench.RunConfig(a, "seq", "exhaustive", 60.0, True) for a in ("spor", "de", "dl")]
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc))
    rows = bench.run_matrix(corpus, configs, parallelism=args.jobs)
    meta = {"corpus": args.corpus, "configs": len(configs), "programs": len(corpus)}
    bench.write_report(rows, args.out, meta)
    failed = [r for r in rows if r["oracle"] == "FAIL"]
    print(f"{len(rows)} runs written to {args.out}; {len(failed)} oracle failures")
    return EXIT_ORACLE if failed else EXIT_OK


def _gen(args) -> int:
    try:
        spec = ClientSpec(args.structure, args.threads, args.calls, args.keys, args.bug, args.seed)
        p = generate_client(spec)
    except (ValueError, NoBuggyClient, BudgetExceeded) as exc:
        raise UsageError(str(exc))
    text = p.dumps() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    handler = {"explore": _explore, "bench": _bench, "gen": _gen}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"porlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
