"""Experiment matrix: programs x run configurations -> report rows."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from porlab.explore import (
    ExploreOutcome,
    Mode,
    StrategyConfig,
    Verdict,
    explore_de_spor,
    explore_dl_spor,
    explore_spor,
    explore_stateful_full,
)
from porlab.harness.clients import Bug, ClientSpec, Structure, generate_client
from porlab.oracle import BudgetExceeded, SoundnessReport, check_soundness
from porlab.program import Program, load_program, program_from_json

EXPLORERS = {
    "SPOR": explore_spor,
    "DESPOR": explore_de_spor,
    "DLSPOR": explore_dl_spor,
    "FULL": explore_stateful_full,
}
ALIASES = {"spor": "SPOR", "de": "DESPOR", "dl": "DLSPOR", "full": "FULL"}

COLUMNS = ("program", "algorithm", "strategy", "seed", "mode", "states", "transitions",
           "retraversed", "classes", "time_ms", "verdict", "oracle")

KEY_DISTRIBUTION = "keys drawn uniformly from 0..keys-1; values of map puts are distinct per call"


def algorithm_name(name: str) -> str:
    key = ALIASES.get(name.lower(), name.upper())
    if key not in EXPLORERS:
        raise ValueError(f"unknown algorithm {name!r}; expected one of spor, de, dl, full")
    return key


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "DLSPOR"
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    mode: Mode = Mode.EXHAUSTIVE
    timeout: float | None = 60.0
    oracle: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", algorithm_name(self.algorithm))
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", StrategyConfig.parse(self.strategy))
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode))


def lts_is_complete(out: ExploreOutcome, mode: Mode) -> bool:
    """Whether the run built its whole reduced LTS (exhaustive mode keeps going past violations)."""
    if out.verdict is Verdict.EXHAUSTED:
        return True
    return out.verdict is Verdict.VIOLATION and mode is Mode.EXHAUSTIVE


def _base_row(p: Program, cfg: RunConfig) -> dict:
    row = {c: "" for c in COLUMNS}
    row.update(program=p.name or "?", algorithm=cfg.algorithm, strategy=str(cfg.strategy),
               seed="" if cfg.strategy.seed is None else cfg.strategy.seed, mode=cfg.mode.value)
    return row


def make_row(p: Program, cfg: RunConfig, out: ExploreOutcome, report: SoundnessReport | None = None) -> dict:
    row = _base_row(p, cfg)
    m = out.metrics
    row.update(states=m.states, transitions=m.transitions, retraversed=m.retraversed,
               time_ms=round(m.wall_time * 1000, 3))
    row["verdict"] = "DNF" if out.verdict is Verdict.TIMEOUT else out.verdict.value
    if report is not None:
        row["classes"] = report.reduced_classes
        row["oracle"] = "PASS" if report.passed else "FAIL"
    return row


def run_one(p: Program, cfg: RunConfig) -> dict:
    """Explore ``p`` under ``cfg``; failures become row fields, never exceptions."""
    try:
        cfg.strategy.validate(p.num_threads)
        out = EXPLORERS[cfg.algorithm](p, cfg.strategy, cfg.mode, timeout=cfg.timeout)
    except Exception as exc:  # one broken run must not abort the matrix
        row = _base_row(p, cfg)
        row["verdict"] = f"error: {exc}"
        return row
    report = None
    skipped = None
    if cfg.oracle and lts_is_complete(out, cfg.mode):
        try:
            report = check_soundness(p, out.lts)
        except BudgetExceeded as exc:
            skipped = f"skipped: {exc}"
    row = make_row(p, cfg, out, report)
    if skipped:
        row["oracle"] = skipped
    return row


def _run_doc(args: tuple[str, RunConfig]) -> dict:
    doc, cfg = args
    return run_one(program_from_json(json.loads(doc)), cfg)


def _as_program(item: ClientSpec | Program) -> Program:
    return generate_client(item) if isinstance(item, ClientSpec) else item


def sort_rows(rows: list[dict], metric: str = "states") -> list[dict]:
    """Per algorithm, ascending in ``metric``; unfinished runs go last."""
    def key(r):
        v = r.get(metric)
        return (r["algorithm"], not isinstance(v, (int, float)), v if isinstance(v, (int, float)) else 0,
                r["program"], r["strategy"], r["mode"])
    return sorted(rows, key=key)


def run_matrix(
    specs: Iterable[ClientSpec | Program],
    configs: Sequence[RunConfig],
    parallelism: int = 1,
    metric: str = "states",
) -> list[dict]:
    programs = [_as_program(s) for s in specs]
    jobs = [(p, c) for p in programs for c in configs]
    if parallelism <= 1:
        rows = [run_one(p, c) for p, c in jobs]
    else:
        docs = [(p.dumps(), c) for p, c in jobs]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_doc, docs))
    return sort_rows(rows, metric)


def builtin_specs(count: int = 50, seed: int = 0) -> list[ClientSpec]:
    """Correct clients cycling through the structures, sized for the oracle.

    Queue clients make one call per thread: unrolled slot scans make larger
    queue clients too big for brute-force checking.
    """
    structures = list(Structure)
    return [oracle_sized(structures[i % len(structures)], Bug.NONE, seed + i) for i in range(count)]


def oracle_sized(structure: Structure, bug: Bug | str, seed: int) -> ClientSpec:
    calls = 1 if structure is Structure.CAS_QUEUE else 2
    return ClientSpec(structure, threads=3, calls=calls, keys=2, bug=bug, seed=seed)


def load_corpus(where: str) -> list[ClientSpec | Program]:
    if where == "builtin":
        return list(builtin_specs())
    if os.path.isdir(where):
        names = sorted(n for n in os.listdir(where) if n.endswith(".json"))
        progs = []
        for n in names:
            p = load_program(os.path.join(where, n))
            progs.append(p if p.name else Program(p.objects, p.threads, p.spec, name=n[:-5]))
        return progs
    raise ValueError(f"corpus {where!r} is neither 'builtin' nor a directory")


def load_matrix(path: str) -> list[RunConfig]:
    """Read ``{"algorithms": [...], "strategies": [...], "modes": [...], "timeout": s, "oracle": b}``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    algs = doc.get("algorithms", ["spor", "de", "dl"])
    strategies = doc.get("strategies", ["seq"])
    modes = doc.get("modes", ["exhaustive"])
    timeout = doc.get("timeout", 60.0)
    oracle = bool(doc.get("oracle", False))
    return [RunConfig(a, s, m, timeout, oracle) for a in algs for s in strategies for m in modes]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def to_json(rows: list[dict], meta: dict | None = None) -> str:
    meta = {"columns": list(COLUMNS), "key_distribution": KEY_DISTRIBUTION, **(meta or {})}
    return json.dumps({"meta": meta, "rows": rows}, indent=2)


def write_report(rows: list[dict], path: str, meta: dict | None = None) -> None:
    text = to_json(rows, meta) if path.endswith(".json") else to_csv(rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
