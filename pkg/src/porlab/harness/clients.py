"""Seeded test clients of small concurrent data structures.

Each client gives every thread a short sequence of method calls with random
keys.  Every call records its return value, and the admitted outcomes are
those reachable when whole calls run atomically in any order.  Buggy
variants drop the synchronisation of selected calls: lock/unlock pairs are
skipped, and compare-and-swap becomes a separate load and store.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace

from porlab.oracle import BudgetExceeded, reachable_outcomes, sequential_outcomes
from porlab.program import Program, program_from_json


class Structure(enum.Enum):
    COARSE_LOCK_SET = "CoarseLockSet"
    FINE_LOCK_LIST = "FineLockList"
    CAS_SET = "CasSet"
    LOCKED_MAP = "LockedMap"
    CAS_QUEUE = "CasQueue"


class Bug(enum.Enum):
    NONE = "None"
    ALL = "All"
    HALF = "Half"
    SINGLE = "Single"


METHODS = {
    Structure.COARSE_LOCK_SET: ("add", "remove", "contains"),
    Structure.FINE_LOCK_LIST: ("add", "remove", "contains"),
    Structure.CAS_SET: ("add", "remove", "contains"),
    Structure.LOCKED_MAP: ("put", "get", "remove"),
    Structure.CAS_QUEUE: ("enq", "deq"),
}

# flags only ever hold 0 or 1, so this offset makes a guarded CAS fail
_NEVER = 1_000_000


def _enum(cls, value):
    if isinstance(value, cls):
        return value
    for member in cls:
        if value in (member.value, member.name, member.value.lower()):
            return member
    raise ValueError(f"unknown {cls.__name__.lower()} {value!r}")


@dataclass(frozen=True)
class ClientSpec:
    structure: Structure
    threads: int = 3
    calls: int = 2
    keys: int = 2
    bug: Bug = Bug.NONE
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "structure", _enum(Structure, self.structure))
        object.__setattr__(self, "bug", _enum(Bug, self.bug))
        if self.threads < 1 or self.calls < 1 or self.keys < 1:
            raise ValueError("threads, calls and keys must all be at least 1")
        if self.calls > 5:
            raise ValueError("at most 5 calls per thread")

    @property
    def name(self) -> str:
        return (f"{self.structure.value}-t{self.threads}-c{self.calls}-k{self.keys}"
                f"-{self.bug.value}-s{self.seed}")


@dataclass(frozen=True)
class Call:
    method: str
    key: int
    value: int


# -- statement helpers -----------------------------------------------------


def _st(op: str, **kw) -> dict:
    return {"op": op, **{k: v for k, v in kw.items() if v is not None}}


def _lock(obj: str, on: bool) -> list[dict]:
    return [_st("lock", obj=obj)] if on else []


def _unlock(obj: str, on: bool) -> list[dict]:
    return [_st("unlock", obj=obj)] if on else []


def _cas(obj: str, expect: str, new: str, reg: str, atomic: bool) -> list[dict]:
    if atomic:
        return [_st("cas", obj=obj, expect=expect, new=new, reg=reg)]
    # the same effect split into a read and an unconditional write-back
    return [
        _st("load", reg="r9", obj=obj),
        _st("local", reg=reg, expr=f"r9 == ({expect})"),
        _st("store", obj=obj, expr=f"{reg} * ({new}) + (1 - {reg}) * r9"),
    ]


def _mark(body: list[dict], label: str) -> list[dict]:
    body[0] = {**body[0], "method": label}
    return body


# -- structures --------------------------------------------------------------


def _flag_update(call: Call) -> list[dict]:
    flag = f"p{call.key}"
    if call.method == "contains":
        return [_st("load", reg="r0", obj=flag), _st("record", reg="r0")]
    was = "r0 == 0" if call.method == "add" else "r0 == 1"
    new = "1" if call.method == "add" else "0"
    return [
        _st("load", reg="r0", obj=flag),
        _st("local", reg="r1", expr=was),
        _st("store", obj=flag, expr=new),
        _st("record", reg="r1"),
    ]


def _coarse_set(call: Call, synced: bool, ctx: dict) -> list[dict]:
    return _lock("m", synced) + _flag_update(call) + _unlock("m", synced)


def _fine_list(call: Call, synced: bool, ctx: dict) -> list[dict]:
    if call.method == "contains":
        return _flag_update(call)
    body = _lock("l0", synced)
    for i in range(1, call.key + 1):
        body += _lock(f"l{i}", synced) + _unlock(f"l{i - 1}", synced)
    return body + _flag_update(call) + _unlock(f"l{call.key}", synced)


def _cas_set(call: Call, synced: bool, ctx: dict) -> list[dict]:
    flag = f"p{call.key}"
    if call.method == "contains":
        return [_st("load", reg="r0", obj=flag), _st("record", reg="r0")]
    old, new = ("0", "1") if call.method == "add" else ("1", "0")
    return _cas(flag, old, new, "r1", synced) + [_st("record", reg="r1")]


def _locked_map(call: Call, synced: bool, ctx: dict) -> list[dict]:
    slot = f"v{call.key}"
    body = _lock("m", synced) + [_st("load", reg="r0", obj=slot)]
    if call.method == "put":
        body.append(_st("store", obj=slot, expr=str(call.value)))
    elif call.method == "remove":
        body.append(_st("store", obj=slot, expr="0"))
    return body + [_st("record", reg="r0")] + _unlock("m", synced)


def _cas_queue(call: Call, synced: bool, ctx: dict) -> list[dict]:
    """Slot queue: ``enq`` claims the lowest free slot, ``deq`` takes the lowest claimed one.

    Claimed slots always form a prefix, so a ``deq`` that meets an unclaimed
    slot has seen an empty queue.  The scan is unrolled over every slot; r3
    holds the result (slot + 1, or -1 when empty) and stays 0 until the call
    is settled, after which the guard pushes the expected value out of range
    so the remaining attempts fail harmlessly.
    """
    body = [_st("local", reg="r3", expr="0")]
    for i in range(ctx["slots"]):
        if call.method == "enq":
            body += _cas(f"q{i}", f"0 - (0 != r3) * {_NEVER}", "1", "r1", synced)
            body.append(_st("local", reg="r3", expr=f"r3 + r1 * {i + 1}"))
        else:
            body.append(_st("load", reg="r0", obj=f"q{i}"))
            guard = f"0 - (1 - r0 * (r3 == 0)) * {_NEVER}"
            body += _cas(f"d{i}", guard, "1", "r1", synced)
            body.append(_st("local", reg="r3", expr="r3 + r1 * %d - (r3 == 0) * (1 - r0)" % (i + 1)))
    if call.method == "deq":
        body.append(_st("local", reg="r3", expr="r3 - (r3 == 0)"))
    return body + [_st("record", reg="r3")]


_BUILDERS = {
    Structure.COARSE_LOCK_SET: _coarse_set,
    Structure.FINE_LOCK_LIST: _fine_list,
    Structure.CAS_SET: _cas_set,
    Structure.LOCKED_MAP: _locked_map,
    Structure.CAS_QUEUE: _cas_queue,
}


def _objects(structure: Structure, keys: int) -> list[str]:
    # for the queue, ``keys`` is the slot count (one per enq call)
    if structure is Structure.COARSE_LOCK_SET:
        return ["m"] + [f"p{k}" for k in range(keys)]
    if structure is Structure.FINE_LOCK_LIST:
        return [f"l{k}" for k in range(keys)] + [f"p{k}" for k in range(keys)]
    if structure is Structure.CAS_SET:
        return [f"p{k}" for k in range(keys)]
    if structure is Structure.LOCKED_MAP:
        return ["m"] + [f"v{k}" for k in range(keys)]
    slots = [f"q{i}" for i in range(keys)]
    return slots + [f"d{i}" for i in range(keys)]


def draw_calls(spec: ClientSpec, rng: random.Random) -> list[list[Call]]:
    methods = METHODS[spec.structure]
    value = 0
    out = []
    for _ in range(spec.threads):
        calls = []
        for _ in range(spec.calls):
            value += 1
            calls.append(Call(rng.choice(methods), rng.randrange(spec.keys), value))
        out.append(calls)
    return out


def buggy_invocations(spec: ClientSpec, rng: random.Random) -> set[int]:
    """Global indices (thread-major) of the calls that lose their synchronisation."""
    total = spec.threads * spec.calls
    if spec.bug is Bug.NONE:
        return set()
    if spec.bug is Bug.ALL:
        return set(range(total))
    if spec.bug is Bug.HALF:
        return set(rng.sample(range(total), (total + 1) // 2))
    return {rng.randrange(total)}


def build_client(spec: ClientSpec, calls: list[list[Call]], buggy: set[int],
                 with_spec: bool = True) -> Program:
    builder = _BUILDERS[spec.structure]
    ctx = {"slots": sum(c.method == "enq" for cs in calls for c in cs)}
    threads = []
    for tid, cs in enumerate(calls):
        body = []
        for i, call in enumerate(cs):
            synced = tid * spec.calls + i not in buggy
            label = call.method if spec.structure is Structure.CAS_QUEUE else f"{call.method}({call.key})"
            body += _mark(builder(call, synced, ctx), label)
        threads.append({"body": body})
    doc = {
        "name": spec.name,
        "objects": [{"id": o, "init": 0} for o in _objects(spec.structure, ctx["slots"] if spec.structure is Structure.CAS_QUEUE else spec.keys)],
        "threads": threads,
    }
    p = program_from_json(doc)
    if with_spec:
        p = p.with_spec(sequential_outcomes(p))
    return p


class NoBuggyClient(RuntimeError):
    pass


def generate_client(spec: ClientSpec, max_attempts: int = 200, max_states: int = 200_000) -> Program:
    """Deterministic client for ``spec``.

    For buggy classes, candidate call sequences are drawn until the injected
    bug makes some outcome outside the admitted set reachable, so every
    buggy client is guaranteed to exhibit a violation.  Candidates too large
    to check within ``max_states`` are skipped.
    """
    for attempt in range(max_attempts):
        rng = random.Random(f"{spec.name}/{attempt}")
        calls = draw_calls(spec, rng)
        buggy = buggy_invocations(spec, rng)
        p = build_client(spec, calls, buggy)
        if spec.bug is Bug.NONE:
            return p
        try:
            if reachable_outcomes(p, max_states) - p.spec.admitted:
                return p
        except BudgetExceeded:
            continue
    raise NoBuggyClient(f"{spec.name}: no violating client in {max_attempts} attempts")


def client_specs(count: int, bug: Bug | str = Bug.NONE, seed: int = 0, **kw) -> list[ClientSpec]:
    """``count`` specs cycling through the structures with consecutive seeds."""
    structures = list(Structure)
    return [ClientSpec(structures[i % len(structures)], bug=bug, seed=seed + i, **kw)
            for i in range(count)]


def with_bug(spec: ClientSpec, bug: Bug | str) -> ClientSpec:
    return replace(spec, bug=_enum(Bug, bug))
