import json
import os
from pathlib import Path

import pytest

from porlab.explore import Mode, StrategyConfig, Verdict, explore_dl_spor
from porlab.harness import bench
from porlab.harness.clients import (
    METHODS,
    Bug,
    ClientSpec,
    NoBuggyClient,
    Structure,
    client_specs,
    generate_client,
    with_bug,
)
from porlab.oracle import reachable_outcomes
from porlab.program import parse_program

GOLDEN = Path(__file__).parent / "golden" / "matrix_report.json"


# -- clients --------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        ClientSpec("CoarseLockSet", calls=6)
    with pytest.raises(ValueError):
        ClientSpec("CoarseLockSet", threads=0)
    with pytest.raises(ValueError):
        ClientSpec("NoSuchThing")
    assert ClientSpec("casset", bug="all").structure is Structure.CAS_SET


@pytest.mark.parametrize("structure", list(Structure))
def test_same_seed_same_document(structure):
    spec = bench.oracle_sized(structure, Bug.NONE, 7)
    assert generate_client(spec).dumps() == generate_client(spec).dumps()


@pytest.mark.parametrize("structure", list(Structure))
def test_correct_clients_never_escape(structure):
    p = generate_client(bench.oracle_sized(structure, Bug.NONE, 1))
    assert reachable_outcomes(p) <= p.spec.admitted
    methods = {st.method.split("(")[0] for t in p.threads for st in t.body if st.method}
    assert methods <= set(METHODS[structure])


def test_coarse_set_single_key_client():
    p = generate_client(ClientSpec("CoarseLockSet", threads=3, calls=2, keys=1, seed=0))
    ops = [st.op for st in p.threads[0].body]
    assert ops[0] == "lock" and "unlock" in ops
    for explore in bench.EXPLORERS.values():
        assert explore(p).verdict is Verdict.EXHAUSTED


def test_buggy_coarse_set_found_by_every_algorithm():
    p = generate_client(ClientSpec("CoarseLockSet", threads=3, calls=2, keys=1, bug="All", seed=0))
    for explore in bench.EXPLORERS.values():
        assert explore(p, mode=Mode.UNTIL_FIRST_ERROR).verdict is Verdict.VIOLATION


@pytest.mark.parametrize("bug", ["All", "Half", "Single"])
def test_buggy_variants_drop_synchronisation(bug):
    for spec in client_specs(5, bug=bug, seed=30, threads=3, calls=1):
        p = generate_client(spec)
        clean = generate_client(with_bug(spec, "None"))
        assert reachable_outcomes(p) - p.spec.admitted
        count = lambda prog: sum(st.op in ("lock", "cas") for t in prog.threads for st in t.body)
        assert count(p) < count(clean)


def test_no_buggy_client():
    # a single contains per thread has nothing to break
    spec = ClientSpec("CoarseLockSet", threads=1, calls=1, keys=1, bug="All")
    with pytest.raises(NoBuggyClient):
        generate_client(spec, max_attempts=5)


def test_queue_outcomes():
    spec = ClientSpec("CasQueue", threads=2, calls=1, seed=0)
    for attempt in range(30):
        p = generate_client(ClientSpec("CasQueue", threads=2, calls=1, seed=attempt))
        labels = [t.body[0].method for t in p.threads]
        if sorted(labels) == ["deq", "enq"]:
            break
    else:
        pytest.fail(f"no enq/deq mix for {spec}")
    enq = labels.index("enq")
    admitted = p.spec.admitted
    # enq returns slot 1; deq returns slot 1 after it, or -1 (empty) before it
    expect = {tuple(1 if t == enq else v for t in range(2)) for v in (1, -1)}
    assert admitted == expect


# -- matrix -----------------------------------------------------------------


def test_two_algorithms_two_rows():
    spec = bench.oracle_sized(Structure.LOCKED_MAP, Bug.NONE, 3)
    rows = bench.run_matrix([spec], [bench.RunConfig("spor"), bench.RunConfig("dl")])
    assert [r["algorithm"] for r in rows] == ["DLSPOR", "SPOR"]
    dl, spor = rows
    assert dl["states"] <= spor["states"]


def test_six_permutations_same_verdicts():
    import itertools

    spec = bench.oracle_sized(Structure.FINE_LOCK_LIST, Bug.NONE, 4)
    configs = [bench.RunConfig("de", StrategyConfig.sequential(perm), oracle=True)
               for perm in itertools.permutations(range(3))]
    rows = bench.run_matrix([spec], configs)
    assert len(rows) == 6
    assert {(r["verdict"], r["oracle"], r["classes"]) for r in rows} == {("exhausted", "PASS", rows[0]["classes"])}


def test_random_seeds_reproducible():
    spec = bench.oracle_sized(Structure.CAS_SET, Bug.NONE, 2)
    configs = [bench.RunConfig("dl", StrategyConfig.random(s)) for s in range(3)]
    strip = lambda rows: [{k: v for k, v in r.items() if k != "time_ms"} for r in rows]
    a, b = bench.run_matrix([spec], configs), bench.run_matrix([spec], configs)
    assert len(a) == 3 and strip(a) == strip(b)


def test_parallel_matches_serial():
    specs = [bench.oracle_sized(s, Bug.NONE, 0) for s in list(Structure)[:3]]
    configs = [bench.RunConfig("de"), bench.RunConfig("spor")]
    strip = lambda rows: [{k: v for k, v in r.items() if k != "time_ms"} for r in rows]
    assert strip(bench.run_matrix(specs, configs, parallelism=2)) == strip(bench.run_matrix(specs, configs))


def test_rows_sorted_ascending_per_algorithm():
    specs = bench.builtin_specs(count=6)
    rows = bench.run_matrix(specs, [bench.RunConfig("spor"), bench.RunConfig("dl")])
    for alg in ("SPOR", "DLSPOR"):
        states = [r["states"] for r in rows if r["algorithm"] == alg]
        assert states == sorted(states)


def test_unfinished_runs_sort_last_and_show_dnf():
    p = generate_client(ClientSpec("CasQueue", threads=3, calls=1, seed=0))
    fast = generate_client(ClientSpec("CasSet", threads=2, calls=1, seed=0))
    rows = bench.run_matrix([p, fast], [bench.RunConfig("full", timeout=0.0)])
    assert rows[-1]["verdict"] == "DNF"


def test_errors_stay_in_rows():
    p = parse_program(json.dumps({"objects": [{"id": "m", "init": 0}],
                                  "threads": [{"body": [{"op": "unlock", "obj": "m"}]}]}))
    bad_perm = parse_program(json.dumps({"objects": [], "threads": [{"body": []}]}))
    rows = bench.run_matrix([p, bad_perm], [bench.RunConfig("dl", StrategyConfig.sequential((1, 0)))])
    assert all(r["verdict"].startswith("error") for r in rows)
    rows = bench.run_matrix([p], [bench.RunConfig("dl")])
    assert rows[0]["verdict"] == "program-error"


def test_oracle_rows_pass():
    rows = bench.run_matrix(bench.builtin_specs(count=5), [bench.RunConfig(a, oracle=True) for a in ("spor", "de", "dl")])
    assert {r["oracle"] for r in rows} == {"PASS"}


def test_matrix_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"algorithms": ["de", "full"], "strategies": ["seq", "rand:1"],
                                "modes": ["first-error"], "timeout": 5, "oracle": True}))
    configs = bench.load_matrix(str(path))
    assert len(configs) == 4
    assert {c.algorithm for c in configs} == {"DESPOR", "FULL"}
    assert all(c.mode is Mode.UNTIL_FIRST_ERROR and c.oracle for c in configs)


def test_corpus_directory(tmp_path):
    for i in range(2):
        p = generate_client(ClientSpec("CasSet", seed=i))
        (tmp_path / f"p{i}.json").write_text(p.dumps())
    progs = bench.load_corpus(str(tmp_path))
    assert [p.name for p in progs] == [f"CasSet-t3-c2-k2-None-s{i}" for i in range(2)]
    with pytest.raises(ValueError):
        bench.load_corpus(str(tmp_path / "missing"))


def test_csv_columns():
    rows = bench.run_matrix(bench.builtin_specs(count=1), [bench.RunConfig("dl")])
    header = bench.to_csv(rows).splitlines()[0]
    assert header == "program,algorithm,strategy,seed,mode,states,transitions,retraversed,classes,time_ms,verdict,oracle"


def golden_matrix():
    specs = [bench.oracle_sized(s, Bug.NONE, 11) for s in Structure]
    specs.append(bench.oracle_sized(Structure.COARSE_LOCK_SET, Bug.SINGLE, 11))
    configs = [bench.RunConfig(a, s, m, None, True) for a in ("spor", "de", "dl")
               for s in ("seq", "seq:2,1,0", "rand:5") for m in ("exhaustive", "first-error")]
    rows = bench.run_matrix(specs, configs)
    doc = json.loads(bench.to_json(rows, {"corpus": "golden"}))
    for r in doc["rows"]:
        r.pop("time_ms")
    return doc


def test_golden_report():
    doc = golden_matrix()
    if os.environ.get("PORLAB_REGEN_GOLDEN"):
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_text(json.dumps(doc, indent=1) + "\n")
    assert doc == json.loads(GOLDEN.read_text())
