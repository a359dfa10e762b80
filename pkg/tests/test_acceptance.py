"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""

import itertools
import math
import random
import time

from porlab.explore import (
    Mode,
    StrategyConfig,
    Verdict,
    explore_de_spor,
    explore_dl_spor,
    explore_spor,
    explore_stateful_full,
)
from porlab.explore.eager import EagerSearch
from porlab.explore.lazy import LazySearch
from porlab.harness import bench
from porlab.harness.clients import Bug, Structure, generate_client
from porlab.harness.corpus import (
    exponential_family,
    micro_corpus,
    random_program,
    source_not_persistent_chain,
    source_not_persistent_small,
)
from porlab.oracle import (
    canonical,
    check_soundness,
    class_representatives,
    count_full_executions,
    count_reduced_executions,
    explore_full,
    is_persistent_set,
    is_source_set,
    lts_contains_class,
)
from porlab.program import dependent, enabled, initial_state, is_deadlock, is_final, replay, step

DYNAMIC = {"SPOR": explore_spor, "DESPOR": explore_de_spor, "DLSPOR": explore_dl_spor}
ALL = {**DYNAMIC, "FULL": explore_stateful_full}


def builtin_clients():
    return [generate_client(s) for s in bench.builtin_specs(50)]


def test_soundness_suite(criterion):
    start = time.perf_counter()
    corpus = micro_corpus()
    programs = corpus + builtin_clients()
    failures = []
    for p in programs:
        classes = class_representatives(p)
        for name, explore in DYNAMIC.items():
            report = check_soundness(p, explore(p).lts, classes=classes)
            if not report.passed:
                failures.append(f"{name}:{p.name}")
    elapsed = time.perf_counter() - start
    ok = len(corpus) >= 200 and not failures and elapsed < 300
    criterion(1, "soundness of SPOR, DESPOR and DLSPOR", ok,
              f"{len(corpus)} micro programs + 50 clients, {len(failures)} failures, {elapsed:.1f}s"
              + (f", e.g. {failures[:3]}" if failures else ""))


def test_exponential_reduction(criterion):
    bad = []
    for n, k in itertools.product((2, 3, 4), repeat=2):
        p = exponential_family(n, k)
        out = explore_spor(p)
        expected = math.factorial(n * k) // math.factorial(k) ** n
        full = count_full_executions(p)
        if expected <= 50_000:
            # explicit enumeration where it fits in memory
            full_explicit = len(explore_full(p))
            if full_explicit != full:
                bad.append((n, k, "explicit", full_explicit))
        if out.metrics.states != n * k + 1:
            bad.append((n, k, "states", out.metrics.states))
        if count_reduced_executions(p, out.lts) != 1:
            bad.append((n, k, "reduced executions"))
        if full != expected:
            bad.append((n, k, "full", full, expected))
    # frozen multinomial value for three threads of three steps
    if count_full_executions(exponential_family(3, 3)) != 1680:
        bad.append((3, 3, "1680"))
    criterion(2, "exponential reduction on invisible threads", not bad,
              f"9 (n, k) pairs, mismatches {bad}" if bad else "9 (n, k) pairs exact, 3x3 -> 1680")


class _RootDone:
    """Remembers the final ``done`` set of the initial state."""

    def free_book(self, node):
        if node.fp == self.lts.root and node.book is not None:
            self.root_done = set(node.book.done)
        super().free_book(node)


class _EagerRoot(_RootDone, EagerSearch):
    pass


class _LazyRoot(_RootDone, LazySearch):
    pass


def test_non_persistent_source_set_witnesses(criterion):
    problems = []
    small, chain = source_not_persistent_small(), source_not_persistent_chain()
    for cls in (_EagerRoot, _LazyRoot):
        search = cls(small)
        out = search.run()
        root = out.lts.node(out.lts.root)
        if search.root_done != {1, 2} or set(root.edges) != {1, 2}:
            problems.append(f"{cls.algorithm} small: done={search.root_done}")
        if not check_soundness(small, out.lts).passed:
            problems.append(f"{cls.algorithm} small unsound")
    s0 = initial_state(small)
    if not is_source_set(small, s0, {1, 2}) or is_persistent_set(small, s0, {1, 2}):
        problems.append("small: {1,2} should be source and not persistent")

    search = _LazyRoot(chain)
    out = search.run()
    root = out.lts.node(out.lts.root)
    if search.root_done != {1, 2, 3, 4} or 5 in root.edges:
        problems.append(f"chain: done={search.root_done}, root threads {sorted(root.edges)}")
    if not check_soundness(chain, out.lts).passed:
        problems.append("chain unsound")
    s0 = initial_state(chain)
    if not is_source_set(chain, s0, {1, 2, 3, 4}) or is_persistent_set(chain, s0, {1, 2, 3, 4}):
        problems.append("chain: {1,2,3,4} should be source and not persistent")
    if not is_persistent_set(chain, s0, {2, 3, 4}):
        problems.append("chain: {2,3,4} should be persistent")
    criterion(3, "source sets that are not persistent", not problems,
              "; ".join(problems) or "done={1,2} and done={1,2,3,4}, thread 5 never taken from the root")


def test_state_space_agreement(criterion):
    bad = []
    programs = micro_corpus() + builtin_clients()
    for p in programs:
        st = {name: explore(p).metrics.states for name, explore in ALL.items()}
        if not st["DESPOR"] == st["DLSPOR"] <= st["SPOR"] <= st["FULL"]:
            bad.append((p.name, st))
    criterion(4, "states(DE) = states(DL) <= states(SPOR) <= states(FULL)", not bad,
              f"{len(programs)} programs, {len(bad)} violations" + (f", e.g. {bad[:2]}" if bad else ""))


def _replays_to_violation(p, out):
    actions, s = replay(p, [a.tid for a in out.trace])
    return (actions == list(out.trace) and is_final(p, s) and not is_deadlock(p, s)
            and s.outcome() == out.outcome and s.outcome() not in p.spec.admitted)


def test_bug_finding(criterion):
    structures = list(Structure)
    wrong = []
    counts = {}
    for bug in (Bug.ALL, Bug.HALF, Bug.SINGLE):
        specs = [bench.oracle_sized(structures[i % 5], bug, 100 + i) for i in range(15)]
        counts[bug.value] = len(specs)
        for spec in specs:
            p = generate_client(spec)
            for name, explore in ALL.items():
                out = explore(p, mode=Mode.UNTIL_FIRST_ERROR)
                if out.verdict is not Verdict.VIOLATION or not _replays_to_violation(p, out):
                    wrong.append(f"{name}:{p.name}:{out.verdict.value}")
    clean = [generate_client(s) for s in bench.builtin_specs(15, seed=100)]
    for p in clean:
        for name, explore in ALL.items():
            out = explore(p, mode=Mode.UNTIL_FIRST_ERROR)
            if out.verdict is not Verdict.EXHAUSTED:
                wrong.append(f"{name}:{p.name}:{out.verdict.value}")
    counts["None"] = len(clean)
    criterion(5, "bug finding with replayable counterexamples", not wrong,
              f"clients per class {counts}, {len(wrong)} misclassified" + (f", e.g. {wrong[:3]}" if wrong else ""))


def _found_classes(p, lts, classes):
    return frozenset(canonical(e) for e in classes if lts_contains_class(p, lts, e))


def _edge_set(lts):
    return sorted(lts.iter_edges())


def test_strategy_invariance(criterion):
    programs = [generate_client(bench.oracle_sized(s, Bug.NONE, 21)) for s in Structure]
    programs += [p for p in micro_corpus() if p.num_threads == 3][::25]
    strategies = [StrategyConfig.sequential(perm) for perm in itertools.permutations(range(3))]
    strategies += [StrategyConfig.random(seed) for seed in (0, 1, 2)]
    bad = []
    for p in programs:
        classes = class_representatives(p)
        for name, explore in DYNAMIC.items():
            seen = set()
            for cfg in strategies:
                a, b = explore(p, cfg), explore(p, cfg)
                if _edge_set(a.lts) != _edge_set(b.lts) or (a.metrics.states, a.metrics.transitions,
                                                             a.metrics.retraversed) != (
                        b.metrics.states, b.metrics.transitions, b.metrics.retraversed):
                    bad.append(f"{name}:{p.name}:{cfg} not reproducible")
                seen.add(_found_classes(p, a.lts, classes))
            if len(seen) != 1:
                bad.append(f"{name}:{p.name}: {len(seen)} distinct class sets")
    criterion(6, "class sets invariant under strategies, runs reproducible", not bad,
              f"{len(programs)} programs x 3 algorithms x 9 strategies, {len(bad)} failures"
              + (f", e.g. {bad[:3]}" if bad else ""))


def _random_state(rng):
    p = random_program(rng)
    s = initial_state(p)
    for _ in range(rng.randint(0, 4)):
        en = sorted(enabled(p, s))
        if not en:
            break
        _, s = step(p, s, rng.choice(en))
    return p, s


def _random_execution(rng):
    p = random_program(rng)
    s = initial_state(p)
    out = []
    while enabled(p, s):
        a, s = step(p, s, rng.choice(sorted(enabled(p, s))))
        out.append(a)
    return out


def test_definition_properties(criterion):
    need = 1000
    rng = random.Random(2024)
    counter = {"persistent=>source": 0, "superset": 0, "idempotence": 0, "swap": 0}
    bad = []
    while counter["persistent=>source"] < need or counter["superset"] < need:
        p, s = _random_state(rng)
        en = sorted(enabled(p, s))
        if not en:
            continue
        T = {t for t in en if rng.random() < 0.5}
        if counter["persistent=>source"] < need and is_persistent_set(p, s, T):
            counter["persistent=>source"] += 1
            if not is_source_set(p, s, T):
                bad.append(("persistent=>source", p.name, s.pcs, T))
        if counter["superset"] < need and is_source_set(p, s, T):
            counter["superset"] += 1
            extra = {t for t in en if rng.random() < 0.5}
            if not is_source_set(p, s, T | extra):
                bad.append(("superset", p.name, s.pcs, T, extra))
    while counter["idempotence"] < need or counter["swap"] < need:
        e = _random_execution(rng)
        c = canonical(e)
        counter["idempotence"] += 1
        if canonical(c) != c:
            bad.append(("idempotence", e))
        swaps = [i for i in range(len(e) - 1) if e[i].tid != e[i + 1].tid and not dependent(e[i], e[i + 1])]
        if swaps:
            i = rng.choice(swaps)
            counter["swap"] += 1
            if canonical(e[:i] + [e[i + 1], e[i]] + e[i + 2:]) != c:
                bad.append(("swap", e, i))
    criterion(7, "persistent/source/canonical-form properties", not bad,
              f"cases {counter}, {len(bad)} counterexamples")


def test_mutants_are_caught(criterion):
    mutants = {"no safe-set fallback": dict(conservative_fallback=False),
               "no all-matches revisit update": dict(all_matches_on_revisit=False)}
    fails = {name: 0 for name in mutants}
    for p in micro_corpus():
        classes = None
        for name, kw in mutants.items():
            out = EagerSearch(p, **kw).run()
            if out.verdict is not Verdict.EXHAUSTED:
                continue
            classes = classes or class_representatives(p)
            if not check_soundness(p, out.lts, classes=classes).passed:
                fails[name] += 1
    criterion(8, "ablated eager explorers fail the oracle", all(fails.values()),
              f"soundness failures per mutant {fails}")
