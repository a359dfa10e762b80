"""Ground truth for the explorers, computed without any reduction.

Two executions are equivalent when they induce the same happens-before
relation: program order plus the order of every conflicting pair.  Classes
are handled in two representations:

* for explicit executions, the canonical form is the lexicographically least
  linearization of the happens-before DAG under the key ``(tid, pc)``;
* for whole graphs, a class is the set of ordered related event pairs,
  packed into an integer bitmask.  Because the pairs contributed by a step
  depend only on the step and on the events still to come (fixed by the
  program counters of the source state), the classes of all full executions
  below a state can be computed by memoised recursion over the state graph.
"""

from __future__ import annotations

import heapq
import json
import sys
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

from porlab.lts import ReducedLts
from porlab.program import (
    Action,
    BlockedError,
    OutcomeSpec,
    Program,
    ProgramFault,
    State,
    enabled,
    initial_state,
    is_deadlock,
    step,
)

Execution = tuple[Action, ...]


class BudgetExceeded(RuntimeError):
    def __init__(self, what: str, count: int):
        super().__init__(f"oracle budget exceeded: more than {count} {what}")
        self.count = count


def _related(a: Action, b: Action) -> bool:
    if a.tid == b.tid:
        return True
    return a.op != "eps" and b.op != "eps" and a.obj == b.obj and not (a.op == b.op == "r")


# ---------------------------------------------------------------------------
# Explicit executions
# ---------------------------------------------------------------------------


def explore_full(p: Program, budget: int = 10**6, start: State | None = None) -> list[Execution]:
    """Every full execution from ``start`` (default: the initial state), by plain DFS."""
    out: list[Execution] = []
    prefix: list[Action] = []

    def dfs(s: State) -> None:
        en = enabled(p, s)
        if not en:
            if is_deadlock(p, s):
                raise ProgramFault("deadlock reached during full enumeration")
            if len(out) >= budget:
                raise BudgetExceeded("executions", budget)
            out.append(tuple(prefix))
            return
        for t in sorted(en):
            a, succ = step(p, s, t)
            prefix.append(a)
            dfs(succ)
            prefix.pop()

    with _deep_recursion(p):
        dfs(initial_state(p) if start is None else start)
    return out


@dataclass
class HappensBefore:
    events: tuple[Action, ...]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def closure(self) -> set[tuple[int, int]]:
        n = len(self.events)
        succ = [set() for _ in range(n)]
        for i, j in self.edges:
            succ[i].add(j)
        for i in reversed(range(n)):
            for j in list(succ[i]):
                succ[i] |= succ[j]
        return {(i, j) for i in range(n) for j in succ[i]}


def happens_before(execution: Sequence[Action]) -> HappensBefore:
    hb = HappensBefore(tuple(execution))
    for j, b in enumerate(execution):
        for i in range(j):
            if _related(execution[i], b):
                hb.edges.add((i, j))
    return hb


def canonical(execution: Sequence[Action]) -> Execution:
    """Lexicographically least linearization of the execution's happens-before order."""
    hb = happens_before(execution)
    n = len(execution)
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for i, j in hb.edges:
        indeg[j] += 1
        succ[i].append(j)
    heap = [(execution[i].tid, execution[i].pc, i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, _, i = heapq.heappop(heap)
        out.append(execution[i])
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, (execution[j].tid, execution[j].pc, j))
    return tuple(out)


def trace_classes(execs: Iterable[Sequence[Action]]) -> set[Execution]:
    return {canonical(e) for e in execs}


def weak_initials(execution: Sequence[Action]) -> set[int]:
    """Threads whose first step in the execution has no happens-before predecessor."""
    out = set()
    seen: set[int] = set()
    for j, b in enumerate(execution):
        if b.tid in seen:
            continue
        seen.add(b.tid)
        if not any(_related(execution[i], b) for i in range(j)):
            out.add(b.tid)
    return out


# ---------------------------------------------------------------------------
# Graph-level classes
# ---------------------------------------------------------------------------


class EventIndex:
    """Dense numbering of every statement of the program as an event."""

    def __init__(self, p: Program):
        self.offsets = []
        events = []
        for t in range(p.num_threads):
            self.offsets.append(len(events))
            events.extend(p.action_at(t, pc) for pc in range(p.body_length(t)))
        self.events = events
        self.n = n = len(events)
        self.rel = [0] * n
        for i, a in enumerate(events):
            m = 0
            for j, b in enumerate(events):
                if i != j and _related(a, b):
                    m |= 1 << j
            self.rel[i] = m
        self.lengths = [p.body_length(t) for t in range(p.num_threads)]

    def index(self, a: Action) -> int:
        return self.offsets[a.tid] + a.pc

    def remaining(self, pcs: Sequence[int]) -> int:
        m = 0
        for t, pc in enumerate(pcs):
            off = self.offsets[t]
            m |= ((1 << (self.lengths[t] - pc)) - 1) << (off + pc)
        return m

    def contribution(self, a: Action, pcs: Sequence[int]) -> int:
        i = self.index(a)
        return (self.rel[i] & self.remaining(pcs) & ~(1 << i)) << (i * self.n)

    def to_canonical(self, mask: int) -> Execution:
        """Canonical linearization of the class encoded by ``mask``."""
        n = self.n
        full = (1 << n) - 1
        succ: list[list[int]] = [[] for _ in range(n)]
        indeg = [0] * n
        for i in range(n):
            row = (mask >> (i * n)) & full
            for j in range(n):
                if row >> j & 1:
                    succ[i].append(j)
                    indeg[j] += 1
        key = lambda i: (self.events[i].tid, self.events[i].pc, i)
        heap = [key(i) for i in range(n) if indeg[i] == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            i = heapq.heappop(heap)[2]
            out.append(self.events[i])
            for j in succ[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(heap, key(j))
        return tuple(out)


def full_state_graph(p: Program, max_states: int = 500_000) -> tuple[State, dict[State, list[tuple[Action, State]]]]:
    """The entire reachable state graph, with exact state matching."""
    root = initial_state(p)
    graph: dict[State, list[tuple[Action, State]]] = {}
    todo = [root]
    while todo:
        s = todo.pop()
        if s in graph:
            continue
        if len(graph) >= max_states:
            raise BudgetExceeded("states", max_states)
        succs = []
        for t in sorted(enabled(p, s)):
            a, succ = step(p, s, t)
            succs.append((a, succ))
            if succ not in graph:
                todo.append(succ)
        graph[s] = succs
    return root, graph


def _graph_classes(
    root: Hashable,
    succs: Callable[[Hashable], list[tuple[Action, Hashable]]],
    pcs_of: Callable[[Hashable], Sequence[int]],
    is_final: Callable[[Hashable], bool],
    index: EventIndex,
) -> set[int]:
    memo: dict[Hashable, frozenset[int]] = {}

    def go(v: Hashable) -> frozenset[int]:
        hit = memo.get(v)
        if hit is not None:
            return hit
        out = succs(v)
        if not out:
            res = frozenset({0}) if is_final(v) else frozenset()
        else:
            pcs = pcs_of(v)
            acc: set[int] = set()
            for a, w in out:
                c = index.contribution(a, pcs)
                acc.update(c | h for h in go(w))
            res = frozenset(acc)
        memo[v] = res
        return res

    return set(go(root))


def _graph_paths(root, succs, is_final) -> int:
    memo: dict = {}

    def go(v) -> int:
        hit = memo.get(v)
        if hit is not None:
            return hit
        out = succs(v)
        res = (1 if is_final(v) else 0) if not out else sum(go(w) for _, w in out)
        memo[v] = res
        return res

    return go(root)


def full_classes(p: Program, max_states: int = 500_000) -> set[int]:
    root, graph = full_state_graph(p, max_states)
    index = EventIndex(p)
    with _deep_recursion(p):
        return _graph_classes(root, graph.__getitem__, lambda s: s.pcs,
                              lambda s: not is_deadlock(p, s), index)


def count_full_executions(p: Program, max_states: int = 500_000) -> int:
    """Number of full executions, by path counting over the full state graph."""
    root, graph = full_state_graph(p, max_states)
    with _deep_recursion(p):
        return _graph_paths(root, graph.__getitem__, lambda s: not is_deadlock(p, s))


def _lts_succs(lts: ReducedLts):
    return lambda fp: [(a, dst) for a, dst in lts.nodes[fp].edges.values()]


def _lts_final(p: Program, lts: ReducedLts):
    return lambda fp: lts.nodes[fp].final and not is_deadlock(p, lts.nodes[fp].state)


def reduced_classes(p: Program, lts: ReducedLts) -> set[int]:
    index = EventIndex(p)
    with _deep_recursion(p):
        return _graph_classes(lts.root, _lts_succs(lts), lambda fp: lts.nodes[fp].state.pcs,
                              _lts_final(p, lts), index)


def count_reduced_executions(p: Program, lts: ReducedLts) -> int:
    with _deep_recursion(p):
        return _graph_paths(lts.root, _lts_succs(lts), _lts_final(p, lts))


@dataclass
class SoundnessReport:
    program: str
    full_classes: int
    reduced_classes: int
    missing: list[list[str]]
    ratio: float
    reduced_executions: int = 0

    @property
    def passed(self) -> bool:
        return not self.missing

    def to_json(self) -> dict:
        return {
            "program": self.program,
            "full_classes": self.full_classes,
            "reduced_classes": self.reduced_classes,
            "missing": self.missing,
            "ratio": self.ratio,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def class_representatives(p: Program, budget: int = 10**6) -> list[Execution]:
    """One full execution per class of the full LTS.

    Stateless DFS with sleep sets under a fixed thread order.  Independent
    steps never enable or disable each other here (only lock steps do, and
    they conflict), so every class is reached exactly once.  Executions cut
    short by the sleep set are not full and are dropped.
    """
    out: list[Execution] = []
    prefix: list[Action] = []
    visits = 0

    def dfs(s: State, sleep: dict[int, Action]) -> None:
        nonlocal visits
        visits += 1
        if visits > budget:
            raise BudgetExceeded("search nodes", budget)
        en = enabled(p, s)
        if not en:
            if not is_deadlock(p, s):
                out.append(tuple(prefix))
            return
        asleep = dict(sleep)
        for t in sorted(en):
            if t in asleep:
                continue
            a, w = step(p, s, t)
            child = {u: b for u, b in asleep.items() if not _related(a, b)}
            prefix.append(a)
            dfs(w, child)
            prefix.pop()
            asleep[t] = a

    with _deep_recursion(p):
        dfs(initial_state(p), {})
    return out


def _predecessor_bounds(p: Program, execution: Sequence[Action]) -> dict[tuple[int, int], tuple[int, ...]]:
    """For each event, the per-thread pc every earlier related event requires."""
    n = p.num_threads
    bounds = {}
    for j, b in enumerate(execution):
        need = [0] * n
        for a in execution[:j]:
            if a.tid != b.tid and _related(a, b):
                need[a.tid] = max(need[a.tid], a.pc + 1)
        bounds[(b.tid, b.pc)] = tuple(need)
    return bounds


def lts_contains_class(p: Program, lts: ReducedLts, execution: Sequence[Action]) -> bool:
    """Whether some full execution of ``lts`` is equivalent to ``execution``.

    A step is allowed at a node when every event ordered before it is done.
    The node's program counters fix which events are done, so this is plain
    reachability over allowed edges.
    """
    bounds = _predecessor_bounds(p, execution)
    seen: set[bytes] = {lts.root}
    todo = [lts.root]
    while todo:
        fp = todo.pop()
        node = lts.nodes[fp]
        if node.final:
            if not is_deadlock(p, node.state):
                return True
            continue
        pcs = node.state.pcs
        for a, dst in node.edges.values():
            if dst in seen:
                continue
            need = bounds[(a.tid, a.pc)]
            if all(pc >= k for pc, k in zip(pcs, need)):
                seen.add(dst)
                todo.append(dst)
    return False


def check_soundness(p: Program, reduced: ReducedLts, max_states: int = 500_000,
                    classes: Sequence[Execution] | None = None) -> SoundnessReport:
    """Check that every class of the full LTS has a full execution in ``reduced``.

    ``classes`` may carry precomputed representatives to share the full
    enumeration across several reduced LTSs of the same program.
    """
    if classes is None:
        classes = class_representatives(p, budget=max_states * 4)
    missing = [canonical(e) for e in classes if not lts_contains_class(p, reduced, e)]
    execs = count_reduced_executions(p, reduced)
    return SoundnessReport(
        program=p.name or "<program>",
        full_classes=len(classes),
        reduced_classes=len(classes) - len(missing),
        missing=sorted([str(a) for a in e] for e in missing),
        ratio=execs / len(classes) if classes else 1.0,
        reduced_executions=execs,
    )


def reachable_outcomes(p: Program, max_states: int = 500_000) -> set[tuple[int, ...]]:
    """Outcome tuples of every reachable final state."""
    _, graph = full_state_graph(p, max_states)
    return {s.outcome() for s, succs in graph.items() if not succs and not is_deadlock(p, s)}


# ---------------------------------------------------------------------------
# Persistent and source sets
# ---------------------------------------------------------------------------


def is_persistent_set(p: Program, s: State, threads: Iterable[int], max_states: int = 500_000) -> bool:
    """Whether no execution from ``s`` avoiding ``threads`` conflicts with their next steps.

    The empty set is rejected at non-final states so that every accepted set
    can be used to expand the state.
    """
    T = set(threads)
    en = enabled(p, s)
    if not T <= en:
        raise ValueError(f"threads {sorted(T - en)} are not enabled")
    if not T:
        return not en
    firsts = [step(p, s, t)[0] for t in T]
    seen = {s}
    todo = [s]
    while todo:
        v = todo.pop()
        for u in enabled(p, v):
            if u in T:
                continue
            a, w = step(p, v, u)
            if any(_related(a, f) for f in firsts):
                return False
            if w not in seen:
                if len(seen) >= max_states:
                    raise BudgetExceeded("states", max_states)
                seen.add(w)
                todo.append(w)
    return True


def is_source_set(p: Program, s: State, threads: Iterable[int], max_states: int = 500_000) -> bool:
    """Whether every full execution from ``s`` has a weak initial in ``threads``.

    A thread of ``threads`` stays a candidate weak initial until some other
    thread takes a step conflicting with its next step; once it moves while
    still a candidate, the execution is covered.  The search looks for a full
    execution where every candidate is eliminated first.
    """
    T = set(threads)
    firsts = {}
    for t in T:
        if s.pcs[t] < p.body_length(t):
            firsts[t] = p.action_at(t, s.pcs[t])
    seen: set[tuple[State, frozenset[int]]] = set()

    def uncovered(v: State, alive: frozenset[int]) -> bool:
        key = (v, alive)
        if key in seen:
            return False
        if len(seen) >= max_states:
            raise BudgetExceeded("states", max_states)
        seen.add(key)
        en = enabled(p, v)
        if not en:
            return not is_deadlock(p, v)
        for u in sorted(en):
            if u in alive:
                continue
            a, w = step(p, v, u)
            rest = frozenset(t for t in alive if not _related(a, firsts[t]))
            if uncovered(w, rest):
                return True
        return False

    with _deep_recursion(p):
        return not uncovered(s, frozenset(firsts))


# ---------------------------------------------------------------------------
# Sequential outcomes
# ---------------------------------------------------------------------------


def method_blocks(p: Program, tid: int) -> list[tuple[int, int]]:
    """``[start, end)`` statement ranges of the method calls of a thread."""
    body = p.threads[tid].body
    starts = [pc for pc, st in enumerate(body) if st.method is not None]
    if not starts or starts[0] != 0:
        starts.insert(0, 0)
    ends = starts[1:] + [len(body)]
    return [(a, b) for a, b in zip(starts, ends) if a < b]


def sequential_outcomes(p: Program, max_states: int = 500_000) -> OutcomeSpec:
    """Outcomes of all executions that run every method call atomically."""
    blocks = [method_blocks(p, t) for t in range(p.num_threads)]
    ends = [{a: b for a, b in bl} for bl in blocks]
    outcomes: set[tuple[int, ...]] = set()
    seen: set[State] = set()
    todo = [initial_state(p)]
    while todo:
        s = todo.pop()
        if s in seen:
            continue
        if len(seen) >= max_states:
            raise BudgetExceeded("states", max_states)
        seen.add(s)
        moved = False
        for t in range(p.num_threads):
            pc = s.pcs[t]
            if pc >= p.body_length(t):
                continue
            end = ends[t][pc]
            v = s
            try:
                while v.pcs[t] < end:
                    _, v = step(p, v, t)
            except (BlockedError, ProgramFault):
                continue
            moved = True
            todo.append(v)
        if not moved and all(s.pcs[t] >= p.body_length(t) for t in range(p.num_threads)):
            outcomes.add(s.outcome())
    if not outcomes:
        raise ValueError("no sequential execution completes")
    return OutcomeSpec(frozenset(outcomes))


class _deep_recursion:
    def __init__(self, p: Program):
        self.need = 4 * sum(p.body_length(t) for t in range(p.num_threads)) + 1000

    def __enter__(self):
        self.old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(self.old, self.need))

    def __exit__(self, *exc):
        sys.setrecursionlimit(self.old)
