"""State fingerprints and the reduced transition system built during a search."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

from porlab.program import Action, Program, State, dependent, is_final


def fingerprint(s: State) -> bytes:
    """128-bit digest of the canonical encoding of ``s``."""
    return hashlib.blake2b(s.encode(), digest_size=16).digest()


class FingerprintCollision(RuntimeError):
    pass


class Status(enum.Enum):
    UNEXPANDED = "unexpanded"
    ON_STACK = "on-stack"
    COMPLETE = "complete"


@dataclass
class NodeBook:
    """Per-state bookkeeping of the dynamic explorers.

    ``current[t]`` holds the threads seen executing a step dependent on the
    step of ``t`` from this state, after it.
    """

    backtrack: set[int] = field(default_factory=set)
    done: set[int] = field(default_factory=set)
    current: dict[int, set[int]] = field(default_factory=dict)


@dataclass(eq=False)
class Node:
    fp: bytes
    state: State
    final: bool
    status: Status = Status.UNEXPANDED
    # tid -> (action, destination fingerprint)
    edges: dict[int, tuple[Action, bytes]] = field(default_factory=dict)
    book: NodeBook | None = None


class ReachResult(NamedTuple):
    tids: set[int]
    stopped: bool
    edges: int


class ReducedLts:
    """The explored graph: nodes keyed by fingerprint, at most one edge per (src, tid).

    Canonical encodings are kept alongside digests, so a digest match between
    different states is detected instead of silently merging them.
    """

    def __init__(self, program: Program):
        self.program = program
        self.nodes: dict[bytes, Node] = {}
        self.root: bytes | None = None
        self.num_edges = 0
        self.retraversed = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, fp: bytes) -> bool:
        return fp in self.nodes

    def node(self, fp: bytes) -> Node:
        return self.nodes[fp]

    def intern(self, s: State) -> tuple[Node, bool]:
        """Return the node for ``s`` and whether it was newly created."""
        fp = fingerprint(s)
        node = self.nodes.get(fp)
        if node is not None:
            if node.state != s:
                raise FingerprintCollision(f"digest {fp.hex()} shared by distinct states")
            return node, False
        node = Node(fp, s, is_final(self.program, s))
        self.nodes[fp] = node
        if self.root is None:
            self.root = fp
        return node, True

    def lookup(self, s: State) -> Node | None:
        node = self.nodes.get(fingerprint(s))
        if node is not None and node.state != s:
            raise FingerprintCollision("digest shared by distinct states")
        return node

    def add_edge(self, src: bytes, action: Action, dst: bytes) -> None:
        node = self.nodes[src]
        if dst not in self.nodes:
            raise KeyError("edge destination is not a node")
        if action.tid in node.edges:
            raise ValueError(f"duplicate edge for thread {action.tid}")
        node.edges[action.tid] = (action, dst)
        self.num_edges += 1

    def is_visited(self, fp: bytes) -> bool:
        """Already reached and either expanded or final."""
        node = self.nodes.get(fp)
        return node is not None and (bool(node.edges) or node.final)

    def iter_edges(self) -> Iterator[tuple[bytes, Action, bytes]]:
        for fp, node in self.nodes.items():
            for action, dst in node.edges.values():
                yield fp, action, dst

    def dump(self, path: str) -> None:
        """Write one JSON line per edge."""
        with open(path, "w", encoding="utf-8") as fh:
            for src, a, dst in self.iter_edges():
                rec = {"src": src.hex(), "tid": a.tid, "pc": a.pc, "kind": a.op,
                       "obj": a.obj, "dst": dst.hex()}
                fh.write(json.dumps(rec) + "\n")


def not_visited(lts: ReducedLts, fp: bytes) -> bool:
    """True for a node with no stored outgoing edge that still has an enabled thread."""
    node = lts.nodes[fp]
    return not node.edges and not node.final


def reachable_actions(lts: ReducedLts, fp: bytes) -> set[Action]:
    """Labels of every edge reachable from ``fp``, visiting each node once."""
    seen = {fp}
    todo = [fp]
    out: set[Action] = set()
    edges = 0
    while todo:
        node = lts.nodes[todo.pop()]
        for action, dst in node.edges.values():
            edges += 1
            out.add(action)
            if dst not in seen:
                seen.add(dst)
                todo.append(dst)
    lts.retraversed += edges
    return out


def reachable_actions_bounded(
    lts: ReducedLts,
    fp: bytes,
    pivot: Action,
    stop: Callable[[set[int]], bool],
) -> ReachResult:
    """Threads with a step dependent on ``pivot`` reachable from ``fp``.

    The result always contains ``pivot.tid``.  The traversal ends as soon as
    ``stop`` holds for the accumulated set, in which case ``stopped`` is set.
    """
    tids = {pivot.tid}
    seen = {fp}
    todo = [fp]
    edges = 0
    while todo:
        node = lts.nodes[todo.pop()]
        for action, dst in node.edges.values():
            edges += 1
            if action.tid not in tids and dependent(pivot, action):
                tids.add(action.tid)
                if stop(tids):
                    lts.retraversed += edges
                    return ReachResult(tids, True, edges)
            if dst not in seen:
                seen.add(dst)
                todo.append(dst)
    lts.retraversed += edges
    return ReachResult(tids, False, edges)
