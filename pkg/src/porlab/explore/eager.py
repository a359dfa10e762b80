"""Eager dynamic source-set exploration (DE-S-POR).

Dependencies are recorded as soon as a visible step is taken: the thread of
the new step is added to the ``current`` set of conflicting steps on the
stack.  When a step leads into an already explored state, every edge
reachable from it is replayed against the stack.

Both updates charge every conflicting stack transition, not only the last
one.  Charging only the last one loses orderings when that transition's
source state has the new thread blocked on a lock held by the same earlier
thread: case 1 of :func:`update_back` fires there, and the earlier state
never learns about the blocked thread.  ``all_matches_on_step=False`` and
``all_matches_on_revisit=False`` restore the last-only rule for experiments.
"""

from __future__ import annotations

from porlab.explore.core import Frame, Mode, Search, StrategyConfig, ExploreOutcome
from porlab.lts import Node, NodeBook, Status, not_visited, reachable_actions
from porlab.program import Action, Program, dependent


def update_curr(path: list[tuple[Node, Action]], a: Action, all_matches: bool = False) -> None:
    for node, prior in reversed(path):
        if prior.tid != a.tid and dependent(a, prior):
            node.book.current[prior.tid].add(a.tid)
            if not all_matches:
                return


def _has_closed_proper_subset(book: NodeBook) -> bool:
    done = book.done
    for t in done:
        closure = {t}
        todo = [t]
        while todo:
            extra = book.current.get(todo.pop(), set()) - closure
            if not extra <= done:
                break
            closure |= extra
            todo.extend(extra)
        else:
            if closure < done:
                return True
    return False


def update_back(book: NodeBook, a: Action, safe: frozenset[int], conservative: bool = True) -> set[int]:
    """New backtrack set after the step ``a`` from this state has been explored.

    Falls back to the whole safe set once a conflicting thread lies outside it;
    returns ``done`` when some proper subset of it is closed under ``current``;
    otherwise the union of the ``current`` sets.  ``conservative=False``
    disables the safe-set fallback (negative-control ablation) and silently
    drops threads that cannot be scheduled.
    """
    if conservative and not book.current[a.tid] <= safe:
        return set(safe)
    if _has_closed_proper_subset(book):
        return set(book.done)
    union = set().union(*(book.current[t] for t in book.done))
    if not union <= safe:
        return set(safe) if conservative else union & safe
    return union


class EagerSearch(Search):
    algorithm = "DESPOR"

    def __init__(self, *args, conservative_fallback: bool = True,
                 all_matches_on_revisit: bool = True, all_matches_on_step: bool = True, **kwargs):
        super().__init__(*args, **kwargs)
        self.conservative = conservative_fallback
        self.all_matches = all_matches_on_revisit
        self.all_matches_step = all_matches_on_step

    def explore(self, node: Node) -> None:
        if not not_visited(self.lts, node.fp):
            for a in reachable_actions(self.lts, node.fp):
                if a.visible:
                    update_curr(self.path, a, all_matches=self.all_matches)
            return
        self.push(node)
        frame = Frame(node)
        safe = self.safe(frame)
        book = node.book = NodeBook(backtrack={self.choose(frame, safe)})
        self.alloc_book()
        while pending := book.backtrack - book.done:
            t = self.choose(frame, pending)
            action, dst = self.follow(frame, t)
            self.path.append((node, action))
            book.done.add(t)
            book.current[t] = {t}
            if action.visible:
                update_curr(self.path, action, all_matches=self.all_matches_step)
            self.explore(dst)
            book.backtrack = update_back(book, action, safe, self.conservative)
            self.path.pop()
        self.free_book(node)
        node.status = Status.COMPLETE


def explore_de_spor(p: Program, cfg: StrategyConfig | None = None, mode: Mode = Mode.EXHAUSTIVE,
                    **kwargs) -> ExploreOutcome:
    return EagerSearch(p, cfg, mode, **kwargs).run()
