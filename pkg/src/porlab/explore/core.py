"""Stateful depth-first exploration: strategies, safe sets and the S-POR search."""

from __future__ import annotations

import enum
import random
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from porlab.lts import Node, ReducedLts, Status, not_visited
from porlab.program import (
    Action,
    Program,
    ProgramFault,
    State,
    enabled,
    initial_state,
    is_deadlock,
    step,
)
from porlab.lts import fingerprint


class Mode(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    UNTIL_FIRST_ERROR = "first-error"


class Verdict(enum.Enum):
    EXHAUSTED = "exhausted"
    VIOLATION = "violation"
    DEADLOCK = "deadlock"
    PROGRAM_ERROR = "program-error"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class StrategyConfig:
    """Transition enumeration order.

    Sequential mode ranks threads by their position in ``order`` (identity when
    omitted); random mode draws uniformly from a generator seeded with ``seed``.
    Successors leading to already visited states always take priority.
    """

    order: tuple[int, ...] | None = None
    seed: int | None = None

    @classmethod
    def sequential(cls, order: Iterable[int] | None = None) -> "StrategyConfig":
        return cls(order=None if order is None else tuple(order))

    @classmethod
    def random(cls, seed: int) -> "StrategyConfig":
        return cls(seed=seed)

    @classmethod
    def parse(cls, text: str) -> "StrategyConfig":
        """Parse ``seq``, ``seq:2,0,1`` or ``rand:<seed>``."""
        kind, _, arg = text.partition(":")
        if kind == "seq":
            if not arg:
                return cls.sequential()
            return cls.sequential(int(x) for x in arg.split(","))
        if kind == "rand" and arg:
            return cls.random(int(arg))
        raise ValueError(f"bad strategy {text!r}; expected seq[:perm] or rand:<seed>")

    @property
    def is_random(self) -> bool:
        return self.seed is not None

    def validate(self, num_threads: int) -> None:
        if self.order is not None and sorted(self.order) != list(range(num_threads)):
            raise ValueError(f"order {self.order} is not a permutation of 0..{num_threads - 1}")

    def make_rng(self) -> random.Random | None:
        return random.Random(self.seed) if self.is_random else None

    def __str__(self) -> str:
        if self.is_random:
            return f"rand:{self.seed}"
        if self.order is None:
            return "seq"
        return "seq:" + ",".join(map(str, self.order))


@dataclass
class Metrics:
    states: int = 0
    transitions: int = 0
    retraversed: int = 0
    wall_time: float = 0.0
    peak_books: int = 0


@dataclass
class ExploreOutcome:
    algorithm: str
    lts: ReducedLts
    metrics: Metrics
    verdict: Verdict
    trace: list[Action] | None = None
    fault: str | None = None
    outcome: tuple[int, ...] | None = None


def _ordered_pick(candidates: Iterable[int], cfg: StrategyConfig, rng: random.Random | None) -> int:
    cands = sorted(candidates)
    if len(cands) == 1:
        # no draw, so explorers that ask for forced choices share one random stream
        return cands[0]
    if cfg.is_random:
        return rng.choice(cands)
    if cfg.order is None:
        return cands[0]
    rank = {t: i for i, t in enumerate(cfg.order)}
    return min(cands, key=lambda t: rank.get(t, len(rank) + t))


def pick_thread(
    candidates: Iterable[int],
    leads_to_visited: Callable[[int], bool],
    cfg: StrategyConfig,
    rng: random.Random | None = None,
) -> int:
    cands = list(candidates)
    if not cands:
        raise ValueError("no candidate threads")
    visited = [t for t in cands if leads_to_visited(t)]
    return _ordered_pick(visited or cands, cfg, rng)


def choose_next(
    candidates: Iterable[int],
    s: State,
    lts: ReducedLts,
    cfg: StrategyConfig,
    rng: random.Random | None = None,
) -> int:
    """Strategy choice among ``candidates``, preferring steps into visited states."""
    def visited(t: int) -> bool:
        return lts.is_visited(fingerprint(step(lts.program, s, t)[1]))

    if cfg.is_random and rng is None:
        rng = cfg.make_rng()
    return pick_thread(candidates, visited, cfg, rng)


def safe_set(p: Program, s: State, pick: Callable[[list[int]], int] = min) -> frozenset[int]:
    """One thread with an invisible next step if any, else every enabled thread."""
    en = enabled(p, s)
    invisible = [t for t in sorted(en) if not p.action_at(t, s.pcs[t]).visible]
    if invisible:
        return frozenset({pick(invisible)})
    return en


class _Abort(Exception):
    def __init__(self, verdict: Verdict, trace: list[Action], fault: str | None = None,
                 outcome: tuple[int, ...] | None = None):
        super().__init__(verdict.value)
        self.verdict = verdict
        self.trace = trace
        self.fault = fault
        self.outcome = outcome


class Frame:
    """Successor cache for one state while it is being expanded."""

    __slots__ = ("node", "succ")

    def __init__(self, node: Node):
        self.node = node
        self.succ: dict[int, tuple[Action, State, bytes]] = {}


class Search:
    """Shared machinery for the stateful explorers.

    Subclasses implement :meth:`explore` for a node that has just been pushed.
    The path holds the transitions of the current initialized execution.
    """

    algorithm = "?"

    def __init__(
        self,
        program: Program,
        strategy: StrategyConfig | None = None,
        mode: Mode = Mode.EXHAUSTIVE,
        admitted: frozenset[tuple[int, ...]] | None = None,
        timeout: float | None = None,
    ):
        self.program = program
        self.strategy = strategy or StrategyConfig()
        self.strategy.validate(program.num_threads)
        self.mode = mode
        if admitted is None and program.spec is not None:
            admitted = program.spec.admitted
        self.admitted = admitted
        self.deadline = None if timeout is None else time.perf_counter() + timeout
        self.lts = ReducedLts(program)
        self.rng = self.strategy.make_rng()
        self.path: list[tuple[Node, Action]] = []
        self.books = 0
        self.peak_books = 0
        self.violation: _Abort | None = None
        self._ticks = 0

    # -- public -----------------------------------------------------------

    def run(self) -> ExploreOutcome:
        start = time.perf_counter()
        depth = sum(self.program.body_length(t) for t in range(self.program.num_threads))
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 4 * depth + 1000))
        verdict, trace, fault, outcome = Verdict.EXHAUSTED, None, None, None
        try:
            root, _ = self.lts.intern(initial_state(self.program))
            self._check_new(root, [])
            self.explore(root)
            if self.violation is not None:
                raise self.violation
        except _Abort as ab:
            verdict, trace, fault, outcome = ab.verdict, ab.trace, ab.fault, ab.outcome
        finally:
            sys.setrecursionlimit(old_limit)
        metrics = Metrics(
            states=len(self.lts),
            transitions=self.lts.num_edges,
            retraversed=self.lts.retraversed,
            wall_time=time.perf_counter() - start,
            peak_books=self.peak_books,
        )
        return ExploreOutcome(self.algorithm, self.lts, metrics, verdict, trace, fault, outcome)

    def explore(self, node: Node) -> None:
        raise NotImplementedError

    # -- helpers ----------------------------------------------------------

    def trace(self, last: Action | None = None) -> list[Action]:
        out = [a for _, a in self.path]
        if last is not None:
            out.append(last)
        return out

    def peek(self, frame: Frame, t: int) -> tuple[Action, State, bytes]:
        """Successor of ``frame.node`` by ``t`` without adding it to the LTS."""
        hit = frame.succ.get(t)
        if hit is None:
            try:
                action, succ = step(self.program, frame.node.state, t)
            except ProgramFault as exc:
                raise _Abort(Verdict.PROGRAM_ERROR, self.trace(), fault=f"thread {t}: {exc}")
            hit = frame.succ[t] = (action, succ, fingerprint(succ))
        return hit

    def choose(self, frame: Frame, candidates: Iterable[int]) -> int:
        return pick_thread(
            candidates,
            lambda t: self.lts.is_visited(self.peek(frame, t)[2]),
            self.strategy,
            self.rng,
        )

    def safe(self, frame: Frame) -> frozenset[int]:
        return safe_set(self.program, frame.node.state, lambda c: self.choose(frame, c))

    def follow(self, frame: Frame, t: int) -> tuple[Action, Node]:
        """Take the step of ``t`` from the frame's state and record the edge."""
        self._tick()
        action, succ, _ = self.peek(frame, t)
        node, fresh = self.lts.intern(succ)
        self.lts.add_edge(frame.node.fp, action, node.fp)
        if fresh:
            self._check_new(node, self.trace(action))
        return action, node

    def push(self, node: Node) -> None:
        if node.status is Status.ON_STACK:
            raise AssertionError("search re-entered a state on the stack")
        node.status = Status.ON_STACK

    def alloc_book(self) -> None:
        self.books += 1
        self.peak_books = max(self.peak_books, self.books)

    def free_book(self, node: Node) -> None:
        if node.book is not None:
            node.book = None
            self.books -= 1

    def _tick(self) -> None:
        self._ticks += 1
        if self.deadline is not None and self._ticks % 256 == 0:
            if time.perf_counter() > self.deadline:
                raise _Abort(Verdict.TIMEOUT, self.trace())

    def _check_new(self, node: Node, trace: list[Action]) -> None:
        if not node.final:
            return
        if is_deadlock(self.program, node.state):
            raise _Abort(Verdict.DEADLOCK, trace)
        if self.admitted is None:
            return
        outcome = node.state.outcome()
        if outcome not in self.admitted:
            found = _Abort(Verdict.VIOLATION, trace, outcome=outcome)
            if self.mode is Mode.UNTIL_FIRST_ERROR:
                raise found
            if self.violation is None:
                self.violation = found


class SporSearch(Search):
    """Stateful DFS expanding only the safe set of each state."""

    algorithm = "SPOR"

    def expansion(self, frame: Frame) -> frozenset[int]:
        return self.safe(frame)

    def explore(self, node: Node) -> None:
        if not not_visited(self.lts, node.fp):
            return
        self.push(node)
        frame = Frame(node)
        remaining = set(self.expansion(frame))
        while remaining:
            t = self.choose(frame, remaining)
            remaining.discard(t)
            action, dst = self.follow(frame, t)
            self.path.append((node, action))
            self.explore(dst)
            self.path.pop()
        node.status = Status.COMPLETE


class FullSearch(SporSearch):
    """Stateful DFS without reduction (every enabled thread, visited states cut)."""

    algorithm = "FULL"

    def expansion(self, frame: Frame) -> frozenset[int]:
        return enabled(self.program, frame.node.state)


def explore_spor(p: Program, cfg: StrategyConfig | None = None, mode: Mode = Mode.EXHAUSTIVE,
                 **kwargs) -> ExploreOutcome:
    return SporSearch(p, cfg, mode, **kwargs).run()


def explore_stateful_full(p: Program, cfg: StrategyConfig | None = None,
                          mode: Mode = Mode.EXHAUSTIVE, **kwargs) -> ExploreOutcome:
    return FullSearch(p, cfg, mode, **kwargs).run()
