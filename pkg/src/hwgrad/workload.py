"""Workload dataflow graphs: representation, file format, and the
graph-level optimizations (compute merge, vertex split, ordering).

File format, one record per line::

    v <id> comp=<unit:count,...> alloc=<bytes> read=<mem:bytes,...> write=<mem:bytes,...>
    e <src> <dst> <bytes>

Empty comp/read/write maps are written as '-'.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import networkx as nx

from .errors import CycleDetected, ParseError, Unsplittable
from .hwmodel import CompUnit, MemUnit

__all__ = ["VertexStats", "Vertex", "Workload",
           "load_workload", "save_workload",
           "compute_merge", "split_vertex", "workload_optimize"]


@dataclass(frozen=True)
class VertexStats:
    n_comp: dict = field(default_factory=dict)    # CompUnit -> op count
    n_alloc: int = 0                              # bytes
    n_read: dict = field(default_factory=dict)    # MemUnit -> bytes
    n_write: dict = field(default_factory=dict)   # MemUnit -> bytes

    def total_comp(self) -> int:
        return sum(self.n_comp.values())

    def validate(self, vid):
        for d in (self.n_comp, self.n_read, self.n_write):
            for k, v in d.items():
                if v < 0:
                    raise ParseError(vid, 0, f"negative stat {k}: {v}")
        if self.n_alloc < 0:
            raise ParseError(vid, 0, f"negative alloc {self.n_alloc}")


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: str
    stats: VertexStats
    # Convolution loop extents (x, y, c, k) when kind == "conv"; used by
    # the tiling search.
    extents: tuple | None = None


@dataclass
class Workload:
    vertices: list = field(default_factory=list)
    edges: list = field(default_factory=list)  # (src_id, dst_id, bytes)

    def vertex(self, vid: str) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for v in self.vertices:
            g.add_node(v.id)
        for s, d, b in self.edges:
            g.add_edge(s, d, bytes=b)
        return g

    def total_stats(self) -> VertexStats:
        comp, read, write = {}, {}, {}
        alloc = 0
        for v in self.vertices:
            alloc += v.stats.n_alloc
            for d, src in ((comp, v.stats.n_comp), (read, v.stats.n_read),
                           (write, v.stats.n_write)):
                for k, n in src.items():
                    d[k] = d.get(k, 0) + n
        return VertexStats(n_comp=comp, n_alloc=alloc, n_read=read, n_write=write)

    def validate(self):
        ids = set()
        for v in self.vertices:
            if v.id in ids:
                raise ParseError(v.id, 0, f"duplicate vertex id '{v.id}'")
            ids.add(v.id)
            v.stats.validate(v.id)
        for s, d, _ in self.edges:
            if s not in ids or d not in ids:
                raise ParseError(s, 0, f"edge ({s}, {d}) references unknown vertex")
        if not nx.is_directed_acyclic_graph(self.graph()):
            raise CycleDetected("workload graph has a cycle")


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def _fmt_map(d, enum_cls):
    if not d:
        return "-"
    order = list(enum_cls)
    items = sorted(d.items(), key=lambda kv: order.index(kv[0]))
    return ",".join(f"{k.value}:{n}" for k, n in items if n)


def _parse_map(text, enum_cls, source, lineno):
    if text == "-":
        return {}
    out = {}
    for part in text.split(","):
        if ":" not in part:
            raise ParseError(source, lineno, f"expected unit:count, got '{part}'")
        name, count = part.split(":", 1)
        try:
            key = enum_cls(name)
        except ValueError:
            raise ParseError(source, lineno, f"unknown unit '{name}'") from None
        try:
            n = int(count)
        except ValueError:
            raise ParseError(source, lineno, f"bad count '{count}'") from None
        out[key] = n
    return out


def save_workload(w: Workload, path) -> None:
    lines = []
    for v in w.vertices:
        s = v.stats
        line = (f"v {v.id} comp={_fmt_map(s.n_comp, CompUnit)} alloc={s.n_alloc} "
                f"read={_fmt_map(s.n_read, MemUnit)} write={_fmt_map(s.n_write, MemUnit)}")
        if v.kind != "op":
            line += f" kind={v.kind}"
        if v.extents:
            line += " extents=" + ",".join(str(x) for x in v.extents)
        lines.append(line)
    for s, d, b in w.edges:
        lines.append(f"e {s} {d} {b}")
    import os
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_workload(path) -> Workload:
    w = Workload()
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if fields[0] == "v":
                w.vertices.append(_parse_vertex(fields, path, lineno))
            elif fields[0] == "e":
                if len(fields) != 4:
                    raise ParseError(str(path), lineno, "edge needs: e <src> <dst> <bytes>")
                try:
                    b = int(fields[3])
                except ValueError:
                    raise ParseError(str(path), lineno, f"bad edge bytes '{fields[3]}'") from None
                w.edges.append((fields[1], fields[2], b))
            else:
                raise ParseError(str(path), lineno, f"unknown record '{fields[0]}'")
    try:
        w.validate()
    except ParseError as exc:
        raise ParseError(str(path), 0, str(exc)) from None
    return w


def _parse_vertex(fields, path, lineno):
    if len(fields) < 6:
        raise ParseError(str(path), lineno, "vertex record too short")
    vid = fields[1]
    kv = {}
    for part in fields[2:]:
        if "=" not in part:
            raise ParseError(str(path), lineno, f"trailing garbage '{part}'")
        k, v = part.split("=", 1)
        if k in kv:
            raise ParseError(str(path), lineno, f"duplicate field '{k}'")
        kv[k] = v
    for req in ("comp", "alloc", "read", "write"):
        if req not in kv:
            raise ParseError(str(path), lineno, f"vertex missing '{req}='")
    extra = set(kv) - {"comp", "alloc", "read", "write", "kind", "extents"}
    if extra:
        raise ParseError(str(path), lineno, f"unknown fields {sorted(extra)}")
    try:
        alloc = int(kv["alloc"])
    except ValueError:
        raise ParseError(str(path), lineno, f"bad alloc '{kv['alloc']}'") from None
    stats = VertexStats(
        n_comp=_parse_map(kv["comp"], CompUnit, str(path), lineno),
        n_alloc=alloc,
        n_read=_parse_map(kv["read"], MemUnit, str(path), lineno),
        n_write=_parse_map(kv["write"], MemUnit, str(path), lineno),
    )
    extents = None
    if "extents" in kv:
        try:
            extents = tuple(int(x) for x in kv["extents"].split(","))
        except ValueError:
            raise ParseError(str(path), lineno, f"bad extents '{kv['extents']}'") from None
    return Vertex(id=vid, kind=kv.get("kind", "op"), stats=stats, extents=extents)


# ---------------------------------------------------------------------------
# Graph optimizations
# ---------------------------------------------------------------------------

def _merge_stats(stats_list):
    comp, read, write = {}, {}, {}
    alloc = 0
    for s in stats_list:
        alloc += s.n_alloc
        for d, src in ((comp, s.n_comp), (read, s.n_read), (write, s.n_write)):
            for k, n in src.items():
                d[k] = d.get(k, 0) + n
    return VertexStats(n_comp=comp, n_alloc=alloc, n_read=read, n_write=write)


def compute_merge(w: Workload, hvth: float) -> Workload:
    """Merge small parallel vertices.

    The graph is partitioned at bridge edges; within each partition,
    vertices at the same depth from the partition's sources form the
    parallel cut.  Groups whose members individually and jointly stay
    below the `hvth` op-count threshold collapse into one vertex with
    summed stats.
    """
    if hvth <= 0 or not w.vertices:
        return w
    g = w.graph()
    bridges = set(nx.bridges(g.to_undirected(as_view=True))) if g.number_of_edges() else set()
    part = g.copy()
    for a, b in bridges:
        if part.has_edge(a, b):
            part.remove_edge(a, b)
        else:
            part.remove_edge(b, a)

    depth = {}
    for comp_nodes in nx.weakly_connected_components(part):
        sub = part.subgraph(comp_nodes)
        for n in nx.topological_sort(sub):
            preds = list(sub.predecessors(n))
            depth[n] = 1 + max((depth[p] for p in preds), default=-1)

    comp_id = {}
    for i, comp_nodes in enumerate(nx.weakly_connected_components(part)):
        for n in comp_nodes:
            comp_id[n] = i

    groups = {}
    for v in w.vertices:
        groups.setdefault((comp_id[v.id], depth[v.id]), []).append(v)

    rename = {}
    merged_vertices = []
    for v in w.vertices:
        if v.id in rename:
            continue
        group = groups[(comp_id[v.id], depth[v.id])]
        candidates = [u for u in group
                      if u.stats.total_comp() < hvth and u.id not in rename]
        chosen, running = [], 0
        for u in candidates:
            if running + u.stats.total_comp() < hvth:
                chosen.append(u)
                running += u.stats.total_comp()
        if v in chosen and len(chosen) >= 2:
            new_id = "+".join(u.id for u in chosen)
            for u in chosen:
                rename[u.id] = new_id
            merged_vertices.append(Vertex(
                id=new_id, kind=chosen[0].kind,
                stats=_merge_stats([u.stats for u in chosen])))
        else:
            merged_vertices.append(v)

    new_edges = []
    seen = {}
    for s, d, b in w.edges:
        ns, nd = rename.get(s, s), rename.get(d, d)
        if ns == nd:
            continue  # edge internal to a merged group
        key = (ns, nd)
        if key in seen:
            idx = seen[key]
            new_edges[idx] = (ns, nd, new_edges[idx][2] + b)
        else:
            seen[key] = len(new_edges)
            new_edges.append((ns, nd, b))
    out = Workload(vertices=merged_vertices, edges=new_edges)
    out.validate()
    return out


def _half(n: int) -> tuple:
    return (n - n // 2, n // 2)


def split_vertex(v: Vertex) -> tuple:
    """Split into two halves with an edge first -> second; every stat is
    halved, odd units going to the first half."""
    s = v.stats
    all_stats = ([s.n_alloc] + list(s.n_comp.values())
                 + list(s.n_read.values()) + list(s.n_write.values()))
    if all(x <= 1 for x in all_stats):
        raise Unsplittable(f"vertex '{v.id}' cannot be split further")
    def split_map(d):
        hi, lo = {}, {}
        for k, n in d.items():
            hi[k], lo[k] = _half(n)
        return hi, lo
    c1, c2 = split_map(s.n_comp)
    r1, r2 = split_map(s.n_read)
    w1, w2 = split_map(s.n_write)
    a1, a2 = _half(s.n_alloc)
    va = Vertex(id=f"{v.id}.a", kind=v.kind,
                stats=VertexStats(n_comp=c1, n_alloc=a1, n_read=r1, n_write=w1))
    vb = Vertex(id=f"{v.id}.b", kind=v.kind,
                stats=VertexStats(n_comp=c2, n_alloc=a2, n_read=r2, n_write=w2))
    return va, vb


def workload_optimize(w: Workload, hvth: float = 0.0) -> Workload:
    """Compute-merge then deterministic topological order (ties broken by
    vertex id ascending)."""
    merged = compute_merge(w, hvth)
    g = merged.graph()
    indeg = {n: g.in_degree(n) for n in g.nodes}
    ready = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for nxt in g.successors(n):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(merged.vertices):
        raise CycleDetected("workload graph has a cycle")
    by_id = {v.id: v for v in merged.vertices}
    return Workload(vertices=[by_id[n] for n in order], edges=list(merged.edges))
