"""Workload graphs: file format, merge/split transforms, topological order.

Merging is checked against a conservation oracle (total stats must be
invariant) over randomized DAGs; splitting against exact halving rules.
"""

import random

import pytest

from hwgrad.errors import CycleDetected, ParseError, Unsplittable, ValidationError
from hwgrad.hwmodel import CompUnit, MemUnit
from hwgrad.workload import (
    Vertex, VertexStats, Workload, compute_merge, load_workload,
    save_workload, split_vertex, workload_optimize,
)


def _stats(comp=0, alloc=0, read=0, write=0):
    return VertexStats(
        n_comp={CompUnit.vector: comp} if comp else {},
        n_alloc=alloc,
        n_read={MemUnit.mainMem: read} if read else {},
        n_write={MemUnit.globalBuf: write} if write else {},
    )


def _chain(n):
    vs = [Vertex(id=f"v{i}", kind="op", stats=_stats(8, 64, 32, 16))
          for i in range(n)]
    es = [(f"v{i}", f"v{i+1}", 64) for i in range(n - 1)]
    return Workload(vertices=vs, edges=es)


def _random_dag(rng, n):
    vs = [Vertex(id=f"v{i}", kind="op",
                 stats=_stats(rng.randint(1, 50), rng.randint(1, 200),
                              rng.randint(0, 100), rng.randint(0, 100)))
          for i in range(n)]
    es = []
    for j in range(1, n):
        for i in range(j):
            if rng.random() < 0.15:
                es.append((f"v{i}", f"v{j}", rng.randint(1, 64)))
    return Workload(vertices=vs, edges=es)


def _totals(w):
    tot = {"alloc": 0, "comp": {}, "read": {}, "write": {}}
    for v in w.vertices:
        tot["alloc"] += v.stats.n_alloc
        for d, key in ((v.stats.n_comp, "comp"), (v.stats.n_read, "read"),
                       (v.stats.n_write, "write")):
            for k, n in d.items():
                tot[key][k] = tot[key].get(k, 0) + n
    return tot


def test_round_trip(tmp_path):
    w = _chain(5)
    p = tmp_path / "w.wl"
    save_workload(w, str(p))
    again = load_workload(str(p))
    assert [v.id for v in again.vertices] == [v.id for v in w.vertices]
    assert again.edges == w.edges
    assert _totals(again) == _totals(w)


def test_load_rejects_malformed(tmp_path):
    cases = [
        "v a comp=vector:8 alloc=64\nbogus line\n",
        "v a comp=badunit:8 alloc=64 read=- write=-\n",
        "e a b 64\n",  # edge endpoints never declared
        "v a comp=- alloc=64 read=- write=-\n"
        "v a comp=- alloc=64 read=- write=-\n",  # duplicate id
    ]
    for text in cases:
        p = tmp_path / "bad.wl"
        p.write_text(text)
        with pytest.raises((ParseError, ValidationError)):
            load_workload(str(p))


def test_validate_rejects_cycles():
    vs = [Vertex(id="a", kind="op", stats=_stats(1, 1)),
          Vertex(id="b", kind="op", stats=_stats(1, 1))]
    w = Workload(vertices=vs, edges=[("a", "b", 1), ("b", "a", 1)])
    with pytest.raises(CycleDetected):
        w.validate()


def test_merge_conserves_totals_randomized():
    rng = random.Random(42)
    for _ in range(20):
        w = _random_dag(rng, rng.randint(5, 20))
        merged = compute_merge(w, hvth=60)
        assert _totals(merged) == _totals(w)
        merged.validate()  # still a DAG with consistent edges


def test_merge_threshold_zero_is_identity():
    w = _chain(6)
    assert compute_merge(w, hvth=0) is w


def test_merge_combines_parallel_same_depth_vertices():
    # Diamond: the two middle vertices sit at equal depth inside one
    # two-edge-connected component, so they are merge candidates.
    vs = [Vertex(id=i, kind="op", stats=_stats(4, 16)) for i in "abcd"]
    es = [("a", "b", 8), ("a", "c", 8), ("b", "d", 8), ("c", "d", 8)]
    w = Workload(vertices=vs, edges=es)
    merged = compute_merge(w, hvth=1000)
    assert len(merged.vertices) == 3
    assert _totals(merged) == _totals(w)
    fused = next(v for v in merged.vertices if "+" in v.id)
    assert fused.stats.n_comp[CompUnit.vector] == 8


def test_split_halves_stats_odd_goes_first():
    v = Vertex(id="x", kind="op", stats=_stats(9, 101, 7, 3))
    a, b = split_vertex(v)
    assert a.id == "x.a" and b.id == "x.b"
    assert a.stats.n_alloc == 51 and b.stats.n_alloc == 50
    assert a.stats.n_comp[CompUnit.vector] == 5
    assert b.stats.n_comp[CompUnit.vector] == 4
    assert a.stats.n_read[MemUnit.mainMem] == 4
    assert b.stats.n_read[MemUnit.mainMem] == 3


def test_split_terminates_within_log_bound():
    v = Vertex(id="x", kind="op", stats=_stats(alloc=1 << 20, comp=4))
    cap = 100
    count = 0
    frontier = [v]
    while frontier:
        cur = frontier.pop()
        if cur.stats.n_alloc > cap:
            count += 1
            frontier.extend(split_vertex(cur))
            assert count < (1 << 20)  # guard
    # Every split halves the allocation, so the depth is logarithmic.
    assert count <= (1 << 20) // cap * 2


def test_split_unsplittable():
    v = Vertex(id="x", kind="op", stats=_stats(comp=1, alloc=1))
    with pytest.raises(Unsplittable):
        split_vertex(v)


def test_topological_order_randomized():
    rng = random.Random(202)
    for _ in range(100):
        w = _random_dag(rng, rng.randint(2, 25))
        out = workload_optimize(w)
        pos = {v.id: i for i, v in enumerate(out.vertices)}
        for src, dst, _ in out.edges:
            assert pos[src] < pos[dst]


def test_topological_tie_break_is_id_ascending():
    vs = [Vertex(id=i, kind="op", stats=_stats(1, 1)) for i in "cab"]
    w = Workload(vertices=vs, edges=[])
    out = workload_optimize(w)
    assert [v.id for v in out.vertices] == ["a", "b", "c"]
