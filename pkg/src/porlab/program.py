"""Bounded shared-memory programs and their sequentially consistent semantics.

A program is a fixed set of threads, each a finite straight-line sequence of
statements over shared integer objects and sixteen per-thread registers
(``r0`` .. ``r15``).  Every statement executes as one atomic transition.  The
statement kind alone decides how the transition is labelled:

======== ========= ==================================
op       action    effect
======== ========= ==================================
load     read o    ``reg <- mem[o]``
store    write o   ``mem[o] <- expr``
cas      write o   compare-and-swap, ``reg <- success``
lock     write o   acquire (blocks while held by another thread)
unlock   write o   release (fault unless held by this thread)
local    invisible ``reg <- expr``
record   invisible append ``reg`` to the thread's outcome list
======== ========= ==================================

Bounded loops (``{"op": "repeat", "count": N, "body": [...]}``) are unrolled
when the document is parsed, so the transition system is always acyclic.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, NamedTuple

NUM_REGISTERS = 16
INT_MIN = -(2**63)
INT_MAX = 2**63 - 1
FREE = -1

VISIBLE_OPS = {"load": "r", "store": "w", "cas": "w", "lock": "w", "unlock": "w"}
INVISIBLE_OPS = {"local", "record"}
STATEMENT_OPS = set(VISIBLE_OPS) | INVISIBLE_OPS


class ProgramFormatError(ValueError):
    """Raised for malformed program documents."""


class ProgramFault(RuntimeError):
    """A runtime error of the program under test (not of the checker)."""


class BlockedError(RuntimeError):
    """Raised when stepping a thread that is not enabled."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|(r\d+)|(==|!=|<|\+|-|\*|\(|\)))")


def _checked(v: int) -> int:
    if v < INT_MIN or v > INT_MAX:
        raise ProgramFault(f"integer overflow ({v})")
    return v


class _ExprParser:
    def __init__(self, text: str, where: str):
        self.text = text
        self.where = where
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m:
                self._fail(f"unexpected character {text[pos]!r}", pos)
            start = m.start(m.lastindex)
            if m.group(1):
                self.tokens.append(("int", m.group(1), start))
            elif m.group(2):
                reg = m.group(2)
                if int(reg[1:]) >= NUM_REGISTERS:
                    self._fail(f"unknown register {reg!r}", start)
                self.tokens.append(("reg", reg, start))
            else:
                self.tokens.append(("op", m.group(3), start))
            pos = m.end()
        self.i = 0

    def _fail(self, msg: str, col: int) -> None:
        raise ProgramFormatError(
            f"{self.where}: syntax error at column {col + 1} of {self.text!r}: {msg}"
        )

    def _peek(self) -> str | None:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else None

    def parse(self) -> Callable[[tuple[int, ...]], int]:
        if not self.tokens:
            self._fail("empty expression", 0)
        fn = self._cmp()
        if self.i != len(self.tokens):
            self._fail(f"unexpected token {self._peek()!r}", self.tokens[self.i][2])
        return fn

    def _cmp(self):
        left = self._add()
        while self._peek() in ("==", "!=", "<"):
            op = self.tokens[self.i][1]
            self.i += 1
            right = self._add()
            if op == "==":
                left = (lambda l, r: lambda g: int(l(g) == r(g)))(left, right)
            elif op == "!=":
                left = (lambda l, r: lambda g: int(l(g) != r(g)))(left, right)
            else:
                left = (lambda l, r: lambda g: int(l(g) < r(g)))(left, right)
        return left

    def _add(self):
        left = self._mul()
        while self._peek() in ("+", "-"):
            op = self.tokens[self.i][1]
            self.i += 1
            right = self._mul()
            if op == "+":
                left = (lambda l, r: lambda g: _checked(l(g) + r(g)))(left, right)
            else:
                left = (lambda l, r: lambda g: _checked(l(g) - r(g)))(left, right)
        return left

    def _mul(self):
        left = self._unary()
        while self._peek() == "*":
            self.i += 1
            right = self._unary()
            left = (lambda l, r: lambda g: _checked(l(g) * r(g)))(left, right)
        return left

    def _unary(self):
        if self._peek() == "-":
            self.i += 1
            inner = self._unary()
            return lambda g: _checked(-inner(g))
        return self._atom()

    def _atom(self):
        if self.i >= len(self.tokens):
            self._fail("unexpected end of expression", len(self.text))
        kind, val, col = self.tokens[self.i]
        self.i += 1
        if kind == "int":
            n = int(val)
            if n > INT_MAX:
                self._fail("integer literal out of range", col)
            return lambda g: n
        if kind == "reg":
            idx = int(val[1:])
            return lambda g: g[idx]
        if val == "(":
            inner = self._cmp()
            if self._peek() != ")":
                self._fail("expected ')'", self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text))
            self.i += 1
            return inner
        self._fail(f"unexpected token {val!r}", col)


def compile_expr(text: str, where: str = "expression") -> Callable[[tuple[int, ...]], int]:
    """Compile an expression string into a function of a register file."""
    if not isinstance(text, str):
        raise ProgramFormatError(f"{where}: expression must be a string, got {text!r}")
    return _ExprParser(text, where).parse()


def _reg_index(name: Any, where: str) -> int:
    if not isinstance(name, str) or not re.fullmatch(r"r\d+", name) or int(name[1:]) >= NUM_REGISTERS:
        raise ProgramFormatError(f"{where}: invalid register {name!r}")
    return int(name[1:])


# ---------------------------------------------------------------------------
# Program structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Statement:
    op: str
    obj: str | None = None
    reg: str | None = None
    expr: str | None = None
    expect: str | None = None
    new: str | None = None
    # Marks the first statement of a method call; used for sequential outcomes.
    method: str | None = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"op": self.op}
        for key in ("obj", "reg", "expr", "expect", "new", "method"):
            val = getattr(self, key)
            if val is not None:
                doc[key] = val
        return doc


@dataclass(frozen=True)
class Thread:
    body: tuple[Statement, ...]


@dataclass(frozen=True)
class OutcomeSpec:
    """Admitted outcome tuples (per-thread recorded values, concatenated)."""

    admitted: frozenset[tuple[int, ...]]

    def __post_init__(self) -> None:
        if not self.admitted:
            raise ProgramFormatError("outcome spec must admit at least one outcome")


class Action(NamedTuple):
    """Transition label: ``(tid, pc, op, obj)`` with ``op`` in ``r``/``w``/``eps``."""

    tid: int
    pc: int
    op: str
    obj: str | None = None

    @property
    def visible(self) -> bool:
        return self.op != "eps"

    def __str__(self) -> str:
        if self.op == "eps":
            return f"({self.tid},{self.pc},eps)"
        return f"({self.tid},{self.pc},{self.op},{self.obj})"


def dependent(a: Action, b: Action) -> bool:
    """Conflict between actions of two different threads."""
    if a.tid == b.tid:
        raise ValueError("dependence is only defined for actions of different threads")
    return a.op != "eps" and b.op != "eps" and a.obj == b.obj and not (a.op == b.op == "r")


@dataclass(frozen=True)
class State:
    """Program state.

    ``mem`` and ``locks`` are indexed by object position in sorted-id order
    (``Program.object_ids``); a free lock holds ``FREE``.
    """

    mem: tuple[int, ...]
    locks: tuple[int, ...]
    regs: tuple[tuple[int, ...], ...]
    pcs: tuple[int, ...]
    outcomes: tuple[tuple[int, ...], ...]

    def encode(self) -> bytes:
        """Canonical byte encoding: objects in id order, threads in id order."""
        parts = [struct.pack("<qq", len(self.mem), len(self.pcs))]
        parts.append(struct.pack(f"<{len(self.mem)}q", *self.mem))
        parts.append(struct.pack(f"<{len(self.locks)}q", *self.locks))
        for regs, pc, out in zip(self.regs, self.pcs, self.outcomes):
            parts.append(struct.pack(f"<q{len(regs)}qq", pc, *regs, len(out)))
            parts.append(struct.pack(f"<{len(out)}q", *out))
        return b"".join(parts)

    def outcome(self) -> tuple[int, ...]:
        return tuple(v for out in self.outcomes for v in out)


class Transition(NamedTuple):
    src: bytes
    action: Action
    dst: bytes


# Compiled statement kinds
_LOAD, _STORE, _CAS, _LOCK, _UNLOCK, _LOCAL, _RECORD = range(7)
_KIND = {"load": _LOAD, "store": _STORE, "cas": _CAS, "lock": _LOCK,
         "unlock": _UNLOCK, "local": _LOCAL, "record": _RECORD}


@dataclass(frozen=True)
class Program:
    objects: tuple[tuple[str, int], ...]
    threads: tuple[Thread, ...]
    spec: OutcomeSpec | None = None
    name: str | None = field(default=None, compare=False)
    _code: tuple = field(default=(), init=False, repr=False, compare=False)
    _actions: tuple = field(default=(), init=False, repr=False, compare=False)
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids = [o for o, _ in self.objects]
        if len(set(ids)) != len(ids):
            raise ProgramFormatError("duplicate object id")
        index = {o: i for i, o in enumerate(sorted(ids))}
        code, actions = [], []
        for tid, thread in enumerate(self.threads):
            tcode, tacts = [], []
            for pc, st in enumerate(thread.body):
                where = f"threads[{tid}].body[{pc}]"
                tcode.append(_compile_statement(st, index, where))
                if st.op in VISIBLE_OPS:
                    tacts.append(Action(tid, pc, VISIBLE_OPS[st.op], st.obj))
                else:
                    tacts.append(Action(tid, pc, "eps"))
            code.append(tuple(tcode))
            actions.append(tuple(tacts))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_code", tuple(code))
        object.__setattr__(self, "_actions", tuple(actions))

    @property
    def num_threads(self) -> int:
        return len(self.threads)

    @property
    def object_ids(self) -> list[str]:
        return sorted(self._index, key=self._index.__getitem__)

    def action_at(self, tid: int, pc: int) -> Action:
        """Static label of the statement at ``pc`` of thread ``tid``."""
        return self._actions[tid][pc]

    def body_length(self, tid: int) -> int:
        return len(self._code[tid])

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.name is not None:
            doc["name"] = self.name
        doc["objects"] = [{"id": o, "init": v} for o, v in self.objects]
        doc["threads"] = [{"body": [st.to_json() for st in t.body]} for t in self.threads]
        if self.spec is not None:
            doc["spec"] = {"admitted": [list(o) for o in sorted(self.spec.admitted)]}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=False)

    def with_spec(self, spec: OutcomeSpec | None) -> "Program":
        return Program(self.objects, self.threads, spec, name=self.name)


def _compile_statement(st: Statement, index: dict[str, int], where: str) -> tuple:
    if st.op not in STATEMENT_OPS:
        raise ProgramFormatError(f"{where}: unknown op {st.op!r}")
    kind = _KIND[st.op]
    obj = None
    if st.op in VISIBLE_OPS:
        if st.obj not in index:
            raise ProgramFormatError(f"{where}: undeclared object {st.obj!r}")
        obj = index[st.obj]
    elif st.obj is not None:
        raise ProgramFormatError(f"{where}: {st.op} takes no object")
    reg = expr = expect = new = None
    if st.op in ("load", "cas", "local", "record"):
        reg = _reg_index(st.reg, where)
    if st.op in ("store", "local"):
        expr = compile_expr(st.expr, where)
    if st.op == "cas":
        expect = compile_expr(st.expect, where)
        new = compile_expr(st.new, where)
    return (kind, obj, reg, expr, expect, new)


# ---------------------------------------------------------------------------
# Program documents
# ---------------------------------------------------------------------------

_STATEMENT_KEYS = {"op", "obj", "reg", "expr", "expect", "new", "method"}


def _parse_body(items: Any, where: str) -> list[Statement]:
    if not isinstance(items, list):
        raise ProgramFormatError(f"{where}: body must be a list")
    out: list[Statement] = []
    for i, item in enumerate(items):
        w = f"{where}[{i}]"
        if not isinstance(item, dict) or "op" not in item:
            raise ProgramFormatError(f"{w}: statement must be an object with an 'op'")
        if item["op"] == "repeat":
            count = item.get("count")
            if count is None:
                raise ProgramFormatError(f"{w}: loop without bound")
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise ProgramFormatError(f"{w}: loop bound must be a non-negative integer")
            inner = _parse_body(item.get("body", []), f"{w}.body")
            out.extend(inner * count)
            continue
        extra = set(item) - _STATEMENT_KEYS
        if extra:
            raise ProgramFormatError(f"{w}: unknown keys {sorted(extra)}")
        out.append(Statement(**item))
    return out


def program_from_json(doc: Any) -> Program:
    if not isinstance(doc, dict):
        raise ProgramFormatError("program document must be a JSON object")
    objects = []
    for i, o in enumerate(doc.get("objects", [])):
        if not isinstance(o, dict) or not isinstance(o.get("id"), str):
            raise ProgramFormatError(f"objects[{i}]: expected {{'id': str, 'init': int}}")
        init = o.get("init", 0)
        if not isinstance(init, int) or isinstance(init, bool) or not INT_MIN <= init <= INT_MAX:
            raise ProgramFormatError(f"objects[{i}]: init must be a 64-bit integer")
        objects.append((o["id"], init))
    threads = []
    raw_threads = doc.get("threads")
    if not isinstance(raw_threads, list):
        raise ProgramFormatError("'threads' must be a list")
    for tid, t in enumerate(raw_threads):
        if not isinstance(t, dict):
            raise ProgramFormatError(f"threads[{tid}]: expected an object with a 'body'")
        threads.append(Thread(tuple(_parse_body(t.get("body", []), f"threads[{tid}].body"))))
    spec = None
    if doc.get("spec") is not None:
        admitted = doc["spec"].get("admitted")
        if not isinstance(admitted, list):
            raise ProgramFormatError("spec.admitted must be a list of outcome lists")
        spec = OutcomeSpec(frozenset(tuple(int(v) for v in o) for o in admitted))
    return Program(tuple(objects), tuple(threads), spec, name=doc.get("name"))


def parse_program(text: str) -> Program:
    """Parse and validate a JSON program document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramFormatError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return program_from_json(doc)


def load_program(path: str) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


# ---------------------------------------------------------------------------
# Semantics
# ---------------------------------------------------------------------------


def initial_state(p: Program) -> State:
    n = p.num_threads
    mem = tuple(v for _, v in sorted(p.objects))
    return State(
        mem=mem,
        locks=(FREE,) * len(mem),
        regs=((0,) * NUM_REGISTERS,) * n,
        pcs=(0,) * n,
        outcomes=((),) * n,
    )


def _is_enabled(p: Program, s: State, t: int) -> bool:
    code = p._code[t]
    pc = s.pcs[t]
    if pc >= len(code):
        return False
    ins = code[pc]
    if ins[0] == _LOCK:
        holder = s.locks[ins[1]]
        return holder == FREE or holder == t
    return True


def enabled(p: Program, s: State) -> frozenset[int]:
    """Threads that are not blocked in ``s``."""
    return frozenset(t for t in range(p.num_threads) if _is_enabled(p, s, t))


def is_final(p: Program, s: State) -> bool:
    return not any(_is_enabled(p, s, t) for t in range(p.num_threads))


def is_deadlock(p: Program, s: State) -> bool:
    """A state with no enabled thread where some thread has not terminated."""
    return is_final(p, s) and any(s.pcs[t] < p.body_length(t) for t in range(p.num_threads))


def _put(tup: tuple, i: int, v: Any) -> tuple:
    return tup[:i] + (v,) + tup[i + 1:]


def step(p: Program, s: State, t: int) -> tuple[Action, State]:
    """Execute the next statement of thread ``t``; returns the label and successor."""
    if not _is_enabled(p, s, t):
        raise BlockedError(f"thread {t} is not enabled")
    pc = s.pcs[t]
    kind, obj, reg, expr, expect, new = p._code[t][pc]
    regs = s.regs[t]
    mem, locks, outcomes = s.mem, s.locks, s.outcomes
    if kind == _LOAD:
        regs = _put(regs, reg, mem[obj])
    elif kind == _STORE:
        mem = _put(mem, obj, expr(regs))
    elif kind == _CAS:
        exp_v, new_v = expect(regs), new(regs)
        if mem[obj] == exp_v:
            mem = _put(mem, obj, new_v)
            regs = _put(regs, reg, 1)
        else:
            regs = _put(regs, reg, 0)
    elif kind == _LOCK:
        if locks[obj] == t:
            raise ProgramFault(f"thread {t} re-acquires lock {p.object_ids[obj]!r} at pc {pc}")
        locks = _put(locks, obj, t)
    elif kind == _UNLOCK:
        if locks[obj] != t:
            raise ProgramFault(f"thread {t} unlocks {p.object_ids[obj]!r} without holding it (pc {pc})")
        locks = _put(locks, obj, FREE)
    elif kind == _LOCAL:
        regs = _put(regs, reg, expr(regs))
    else:
        outcomes = _put(outcomes, t, outcomes[t] + (regs[reg],))
    succ = State(
        mem=mem,
        locks=locks,
        regs=_put(s.regs, t, regs) if regs is not s.regs[t] else s.regs,
        pcs=_put(s.pcs, t, pc + 1),
        outcomes=outcomes,
    )
    return p._actions[t][pc], succ


def next_transition(p: Program, s: State, t: int) -> Transition:
    """The transition of thread ``t`` from ``s``, with fingerprinted endpoints."""
    from porlab.lts import fingerprint

    action, succ = step(p, s, t)
    return Transition(fingerprint(s), action, fingerprint(succ))


def replay(p: Program, tids: Iterable[int], start: State | None = None) -> tuple[list[Action], State]:
    """Run the given thread schedule from ``start`` (default: initial state)."""
    s = initial_state(p) if start is None else start
    actions = []
    for t in tids:
        a, s = step(p, s, t)
        actions.append(a)
    return actions, s
