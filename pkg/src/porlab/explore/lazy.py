"""Lazy dynamic source-set exploration (DL-S-POR).

Dependencies of a step from ``s`` are computed only when the search returns
to ``s``, by a forward traversal of the already built graph below the
successor.  Three shortcuts avoid or cut these traversals:

* no traversal once ``done`` reaches the safe set, or when every remaining
  safe thread leads into a visited state (those edges are recorded directly);
* the traversal stops once ``current[t]`` covers the whole safe set;
* it also stops at the first thread that is not enabled in ``s``, since the
  backtrack set then falls back to the safe set anyway.
"""

from __future__ import annotations

from porlab.explore.core import Frame, Mode, Search, StrategyConfig, ExploreOutcome
from porlab.explore.eager import update_back
from porlab.lts import Node, NodeBook, Status, not_visited, reachable_actions_bounded
from porlab.program import Program


class LazySearch(Search):
    algorithm = "DLSPOR"

    def explore(self, node: Node) -> None:
        if not not_visited(self.lts, node.fp):
            return
        self.push(node)
        frame = Frame(node)
        safe = self.safe(frame)
        if len(safe) == 1:
            (t,) = safe
            self._expand(frame, t)
            node.status = Status.COMPLETE
            return
        book = node.book = NodeBook()
        self.alloc_book()
        while True:
            pending = book.backtrack - book.done
            if not pending:
                pending = safe - book.done
                if not pending:
                    raise AssertionError("no thread left to explore from an incomplete state")
            self._expand(frame, self.choose(frame, pending))
            if self.is_complete(frame, book, safe):
                break
        self.free_book(node)
        node.status = Status.COMPLETE

    def _expand(self, frame: Frame, t: int) -> None:
        action, dst = self.follow(frame, t)
        if not_visited(self.lts, dst.fp):
            self.path.append((frame.node, action))
            self.explore(dst)
            self.path.pop()

    def is_complete(self, frame: Frame, book: NodeBook, safe: frozenset[int]) -> bool:
        node = frame.node
        for t, (action, dst) in list(node.edges.items()):
            if t in book.done:
                continue
            book.done.add(t)
            rest = safe - book.done
            if not rest or all(self.lts.is_visited(self.peek(frame, u)[2]) for u in rest):
                for u in sorted(rest):
                    self.follow(frame, u)
                book.done = set(safe)
                book.backtrack = set(book.done)
                return True
            reach = reachable_actions_bounded(
                self.lts, dst, action,
                stop=lambda tids: not tids <= safe or safe <= tids,
            )
            book.current[t] = reach.tids
            book.backtrack = update_back(book, action, safe)
            if book.backtrack == book.done:
                return True
        return False


def explore_dl_spor(p: Program, cfg: StrategyConfig | None = None, mode: Mode = Mode.EXHAUSTIVE,
                    **kwargs) -> ExploreOutcome:
    return LazySearch(p, cfg, mode, **kwargs).run()
