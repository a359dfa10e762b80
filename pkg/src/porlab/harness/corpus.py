"""Small exhaustively enumerated programs for soundness and agreement checks.

Bodies are built from a handful of tokens over two shared objects ``x`` and
``y`` and one lock ``m``.  Stores always write ``1`` so that different
interleavings often reach the same state, which exercises the revisit paths
of the stateful explorers.  Programs equal up to a renaming of threads or of
``x``/``y`` are kept once, except in the lock family, where every thread
order is kept.
"""

from __future__ import annotations

import itertools
import random

from porlab.program import Program, program_from_json

TOKENS_XY = ("rx", "wx", "ry", "wy")
LOCK_MENU = ("wx", "rx", "L", "Lwx", "Lrx")

_SWAP = {"x": "y", "y": "x"}


def _load(obj: str, local: bool) -> list[dict]:
    out = [{"op": "load", "reg": "r0", "obj": obj}]
    if local:
        out.append({"op": "local", "reg": "r1", "expr": "r0 + 1"})
    return out


def _token(tok: str, local: bool) -> list[dict]:
    if tok in ("wx", "wy"):
        return [{"op": "store", "obj": tok[1], "expr": "1"}]
    if tok in ("rx", "ry"):
        return _load(tok[1], local)
    if tok == "L":
        return [{"op": "lock", "obj": "m"}, {"op": "unlock", "obj": "m"}]
    if tok.startswith("L"):
        return [{"op": "lock", "obj": "m"}, *_token(tok[1:], local), {"op": "unlock", "obj": "m"}]
    raise ValueError(f"unknown token {tok!r}")


def build(name: str, bodies: list[tuple[str, ...]], local: bool = False) -> Program:
    """Program whose thread ``i`` runs the tokens ``bodies[i]`` in order."""
    threads = [{"body": [st for tok in b for st in _token(tok, local)]} for b in bodies]
    used = {st["obj"] for th in threads for st in th["body"] if "obj" in st}
    objects = [{"id": o, "init": 0} for o in sorted(used)]
    return program_from_json({"name": name, "objects": objects, "threads": threads})


def _rename(tok: str) -> str:
    return tok[:-1] + _SWAP.get(tok[-1], tok[-1])


def _canonical(bodies) -> tuple:
    plain = tuple(sorted(bodies))
    swapped = tuple(sorted(tuple(_rename(t) for t in b) for b in bodies))
    return min(plain, swapped)


def _family(prefix: str, candidates, local: bool, seen: set, ordered: bool = False) -> list[Program]:
    out = []
    for bodies in candidates:
        key = (local, tuple(bodies) if ordered else _canonical(bodies))
        if key in seen:
            continue
        seen.add(key)
        label = "|".join("".join(b) or "-" for b in key[1])
        out.append(build(f"{prefix}:{label}", list(key[1]), local))
    return out


def micro_corpus(sample_seed: int = 0) -> list[Program]:
    """About two hundred programs with 2 or 3 threads and at most 3 visible ops per thread."""
    seen: set = set()
    rng = random.Random(sample_seed)
    one_or_two = [(t,) for t in TOKENS_XY] + list(itertools.product(TOKENS_XY, repeat=2))
    pairs = itertools.combinations_with_replacement(one_or_two, 2)
    progs = _family("A", pairs, False, seen)
    singles = itertools.combinations_with_replacement([(t,) for t in TOKENS_XY], 3)
    progs += _family("B", singles, True, seen)
    # exploration order follows thread ids, so lock programs keep every thread order
    menu = itertools.product([(t,) for t in LOCK_MENU], repeat=3)
    progs += _family("C", menu, False, seen, ordered=True)
    twos = list(itertools.product(TOKENS_XY, repeat=2))
    triples = sorted({_canonical(c) for c in itertools.combinations_with_replacement(twos, 3)})
    progs += _family("D", rng.sample(triples, 40), True, seen)
    threes = sorted({_canonical(c) for c in itertools.combinations_with_replacement(
        list(itertools.product(("rx", "wx", "wy"), repeat=3)), 2)})
    progs += _family("E", rng.sample(threes, 15), False, seen)
    return progs


def exponential_family(n: int, k: int) -> Program:
    """``n`` threads of ``k`` invisible steps each."""
    body = [{"op": "local", "reg": "r0", "expr": f"r0 + {i + 1}"} for i in range(k)]
    return program_from_json({"name": f"invisible-{n}x{k}", "objects": [],
                              "threads": [{"body": body} for _ in range(n)]})


def _witness(name: str, objects: tuple[str, ...], bodies: list[list[dict]]) -> Program:
    # thread 0 is left empty so the interesting threads are numbered from 1
    return program_from_json({"name": name, "objects": [{"id": o, "init": 0} for o in objects],
                              "threads": [{"body": []}] + [{"body": b} for b in bodies]})


def _store(obj: str, value: str = "1") -> dict:
    return {"op": "store", "obj": obj, "expr": value}


def _read(obj: str, reg: str = "r0") -> dict:
    return {"op": "load", "reg": reg, "obj": obj}


def source_not_persistent_small() -> Program:
    """Three threads where ``{1, 2}`` is a source set of the root but not persistent.

    Thread 2 reads ``o2`` before reading ``o1``, so the conflict between
    threads 2 and 3 only shows up after thread 1 has been explored.
    """
    return _witness("source-not-persistent-3", ("o1", "o2"), [
        [_store("o1")],
        [_read("o2"), _read("o1", "r1")],
        [_store("o1", "3")],
    ])


def source_not_persistent_chain() -> Program:
    """Five threads where ``{1, 2, 3, 4}`` is a source set of the root but not persistent.

    Threads 2, 3 and 4 wait on each other through ``P``, ``Q`` and ``R``
    before they reach ``X``; ``{2, 3, 4}`` is persistent, and the only
    persistent set containing thread 1 is every thread.
    """
    return _witness("source-not-persistent-5", ("P", "Q", "R", "X"), [
        [_store("X")],
        [_store("P"), _read("R"), _read("X")],
        [_store("Q"), _read("P"), _read("R"), _read("X")],
        [_store("R"), _read("Q"), _read("X")],
        [_read("X")],
    ])


def random_program(rng: random.Random, max_threads: int = 3, max_ops: int = 3,
                   with_lock: bool = True) -> Program:
    """Random small program over ``x``, ``y`` and (optionally) the lock ``m``."""
    menu = list(TOKENS_XY) + (["L", "Lwx", "Lry"] if with_lock else [])
    n = rng.randint(2, max_threads)
    bodies = [tuple(rng.choice(menu) for _ in range(rng.randint(1, max_ops))) for _ in range(n)]
    label = "|".join("".join(b) for b in bodies)
    return build(f"R:{label}", bodies, local=rng.random() < 0.5)
