"""Forward pass: fold an ordered workload over mutable memory/compute
state against a concrete hardware model, producing cycle counts and
per-vertex execution records.

Vertices that do not fit the working buffer are split in half and
streamed (swap time charged against main-memory bandwidth).  A prefetch
policy overlaps the next vertex's memory fetch with the current vertex's
compute when bandwidth and capacity headroom allow.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import InfeasibleVertex, Unsplittable
from .hwmodel import CompUnit, ConcreteHardwareModel, MemUnit, Metric
from .workload import Vertex, Workload, split_vertex, workload_optimize

__all__ = ["MapperConfig", "MemoryState", "ComputeState", "ExecRecord",
           "MapResult", "map_workload", "map_to_compute", "mem_alloc",
           "map_mem_acc", "has_space", "default_hvth", "tiling_search",
           "write_trace"]


@dataclass
class MapperConfig:
    overlap: bool = True       # max-overlap vertex time; False = additive
    prefetch: bool = True
    hvth: float | None = None  # compute-merge threshold; None = auto
    bw_threshold: float = 0.9  # prefetch policy bandwidth/capacity knee


@dataclass
class MemoryState:
    capacity: float
    bandwidth: float
    capacity_used: int = 0
    bw_used: float = 0.0
    n_reads: int = 0
    n_writes: int = 0
    allocs: deque = field(default_factory=deque)  # FIFO of (vertex id, bytes)

    def check(self):
        assert 0 <= self.capacity_used <= self.capacity, \
            f"capacity violated: {self.capacity_used} / {self.capacity}"


@dataclass
class ComputeState:
    n_ops: int = 0
    rows_active: int = 0
    cols_active: int = 0


@dataclass
class ExecRecord:
    vertex: str
    t_c: int
    t_mem: dict              # MemUnit -> cycles
    t_stream: int
    t_exec: int
    t_min: int
    prefetched: bool
    credit: int              # overlap cycles hidden by prefetch
    ops: dict                # CompUnit -> op count
    mem_bytes: dict          # MemUnit -> (read bytes, write bytes)
    alloc: int


@dataclass
class MapResult:
    total_cycles: int
    memory: dict             # MemUnit -> MemoryState
    compute: dict            # CompUnit -> ComputeState
    records: list


def default_hvth(c: ConcreteHardwareModel) -> float:
    """Merge threshold: 1% of what the machine computes in 1000 cycles."""
    peak = sum(c.lookup(u, Metric.throughput) for u in c.comp_units())
    return peak * 1000.0 / 100.0


def _ceil_div(n: float, d: float) -> int:
    return int(math.ceil(n / d))


def has_space(ms: MemoryState, n: int) -> bool:
    return ms.capacity_used + n <= ms.capacity


def mem_alloc(ms: MemoryState, vid: str, n: int) -> None:
    """Allocate n bytes, evicting oldest completed allocations as needed."""
    while ms.capacity_used + n > ms.capacity and ms.allocs:
        _, freed = ms.allocs.popleft()
        ms.capacity_used -= freed
    ms.capacity_used += n
    ms.allocs.append((vid, n))
    ms.check()


def map_to_compute(c: ConcreteHardwareModel, cs: dict, n_comp: dict) -> int:
    """Advance compute state; returns the compute cycles for this vertex
    (ceil(ops/throughput), summed over active units)."""
    t_c = 0
    for u in c.comp_units():
        ops = n_comp.get(u, 0)
        if ops <= 0:
            continue
        thr = c.lookup(u, Metric.throughput)
        t_c += _ceil_div(ops, thr)
        st = cs[u]
        st.n_ops += ops
        if u is CompUnit.systolicArray and "sysArrX" in c.arch:
            rows = int(min(c.arch["sysArrX"], ops))
            st.rows_active = max(st.rows_active, rows)
            st.cols_active = max(st.cols_active,
                                 int(min(c.arch["sysArrY"], _ceil_div(ops, rows))))
        else:
            st.rows_active = max(st.rows_active, int(min(thr, ops)))
    return t_c


def map_mem_acc(c: ConcreteHardwareModel, ms: dict, n_read: dict, n_write: dict) -> dict:
    """Account reads/writes; returns per-unit memory cycles
    ceil((read+write bytes) / bandwidth)."""
    t_mem = {}
    for m in c.mem_units():
        r, w = n_read.get(m, 0), n_write.get(m, 0)
        if r == 0 and w == 0:
            continue
        st = ms[m]
        st.n_reads += r
        st.n_writes += w
        t_mem[m] = _ceil_div(r + w, st.bandwidth)
    return t_mem


def _alloc_unit(c: ConcreteHardwareModel) -> MemUnit:
    """Working buffer: the largest on-chip memory, falling back to main
    memory for designs without one."""
    on_chip = [m for m in c.mem_units() if m is not MemUnit.mainMem]
    if on_chip:
        return max(on_chip, key=lambda m: c.lookup(m, Metric.capacity))
    return MemUnit.mainMem


def map_workload(w: Workload, c: ConcreteHardwareModel,
                 cfg: MapperConfig | None = None) -> MapResult:
    cfg = cfg or MapperConfig()
    hvth = cfg.hvth if cfg.hvth is not None else default_hvth(c)
    ordered = workload_optimize(w, hvth)

    ms = {m: MemoryState(capacity=c.lookup(m, Metric.capacity),
                         bandwidth=c.lookup(m, Metric.bandwidth))
          for m in c.mem_units()}
    cs = {u: ComputeState() for u in c.comp_units()}
    alloc_mem = _alloc_unit(c)
    stream_mem = MemUnit.mainMem if MemUnit.mainMem in ms else alloc_mem
    stream_bw = ms[stream_mem].bandwidth

    worklist = deque(ordered.vertices)
    streaming: set = set()
    force_stream: set = set()
    credits: dict = {}
    records = []
    total = 0

    while worklist:
        v = worklist.popleft()
        s = v.stats
        cap = ms[alloc_mem].capacity
        if s.n_alloc > cap:
            if cap < 1:
                raise InfeasibleVertex(f"vertex '{v.id}': no usable memory capacity")
            try:
                va, vb = split_vertex(v)
            except Unsplittable:
                raise InfeasibleVertex(
                    f"vertex '{v.id}' cannot be split to fit "
                    f"{cap:g} bytes") from None
            streaming.update((va.id, vb.id))
            if v.id in streaming:
                streaming.discard(v.id)
            if v.id in force_stream:
                force_stream.discard(v.id)
                force_stream.update((va.id, vb.id))
            if v.id in credits:
                credits[va.id] = credits.pop(v.id)
            worklist.appendleft(vb)
            worklist.appendleft(va)
            continue

        t_c = map_to_compute(c, cs, s.n_comp)
        mem_alloc(ms[alloc_mem], v.id, s.n_alloc)
        t_mem = map_mem_acc(c, ms, s.n_read, s.n_write)

        t_stream = 0
        if v.id in streaming or v.id in force_stream:
            t_stream = _ceil_div(s.n_alloc, stream_bw) if s.n_alloc else 0

        parts = ([t_c] if s.n_comp else []) + list(t_mem.values())
        if cfg.overlap:
            t_exec = (max(parts) if parts else 0) + t_stream
        else:
            t_exec = t_c + sum(t_mem.values()) + t_stream
        t_min = min(parts) if parts else 0

        was_prefetched = v.id in credits
        credit = min(credits.pop(v.id, 0), t_exec)
        total += t_exec - credit

        for m in ms:
            r, wbytes = s.n_read.get(m, 0), s.n_write.get(m, 0)
            ms[m].bw_used = (r + wbytes) / max(t_exec, 1)

        records.append(ExecRecord(
            vertex=v.id, t_c=t_c, t_mem=t_mem, t_stream=t_stream,
            t_exec=t_exec, t_min=t_min,
            prefetched=was_prefetched,
            credit=credit,
            ops={u: n for u, n in s.n_comp.items() if n},
            mem_bytes={m: (s.n_read.get(m, 0), s.n_write.get(m, 0))
                       for m in c.mem_units()
                       if s.n_read.get(m, 0) or s.n_write.get(m, 0)},
            alloc=s.n_alloc))

        if cfg.prefetch and worklist:
            _prefetch_next(c, ms, cfg, alloc_mem, stream_mem, worklist[0],
                           t_c, force_stream, credits, records[-1])

    return MapResult(total_cycles=total, memory=ms, compute=cs, records=records)


def _prefetch_next(c, ms, cfg, alloc_mem, stream_mem, nxt: Vertex, t_c_cur: int,
                   force_stream: set, credits: dict, cur_record: ExecRecord) -> None:
    """Threshold policy: do nothing when fetch bandwidth is saturated;
    stream the next vertex when the buffer is nearly full; otherwise fetch
    the next vertex's inputs under the current vertex's compute."""
    k = cfg.bw_threshold
    buf, src = ms[alloc_mem], ms[stream_mem]
    if src.bw_used > k * src.bandwidth:
        return
    if buf.capacity_used > k * buf.capacity:
        force_stream.add(nxt.id)
        return
    if not has_space(buf, nxt.stats.n_alloc):
        return
    t_mem_next = 0
    for m in c.mem_units():
        b = nxt.stats.n_read.get(m, 0) + nxt.stats.n_write.get(m, 0)
        if b:
            t_mem_next = max(t_mem_next, _ceil_div(b, ms[m].bandwidth))
    credits[nxt.id] = min(t_mem_next, t_c_cur)


def _pow2_grid(extent: int) -> list:
    vals = []
    p = 1
    while p <= extent:
        vals.append(p)
        p *= 2
    if extent not in vals:
        vals.append(extent)
    return vals


def tiling_search(v: Vertex, c: ConcreteHardwareModel) -> tuple:
    """Pick the (x, y, ch, k) tiling of a convolution vertex minimizing
    modeled memory energy over a powers-of-two factor grid.

    Main-memory traffic per tiling: inputs refetched once per output-channel
    tile, weights once per spatial tile, outputs spilled once per
    input-channel tile.  On-chip traffic is tiling-independent.
    """
    if v.extents is None or len(v.extents) != 4:
        raise ValueError(f"vertex '{v.id}' carries no convolution extents")
    X, Y, C, K = v.extents
    mems = c.mem_units()
    if len(mems) < 2 or MemUnit.mainMem not in mems:
        return (X, Y, C, K)
    on = _alloc_unit(c)
    cap = c.lookup(on, Metric.capacity)
    re_main = c.lookup(MemUnit.mainMem, Metric.readEnergy)
    we_main = c.lookup(MemUnit.mainMem, Metric.writeEnergy)

    best, best_cost = None, None
    for tx in _pow2_grid(X):
        for ty in _pow2_grid(Y):
            for tc in _pow2_grid(C):
                for tk in _pow2_grid(K):
                    cost = tiling_cost(v.extents, (tx, ty, tc, tk),
                                       cap, re_main, we_main)
                    if cost is None:
                        continue
                    if best_cost is None or cost < best_cost:
                        best, best_cost = (tx, ty, tc, tk), cost
    if best is None:
        # No tile fits on chip: fall back to the smallest tile.
        return (1, 1, 1, 1)
    return best


def tiling_cost(extents: tuple, tiling: tuple,
                on_chip_cap: float, re_main: float, we_main: float):
    """Main-memory energy of one tiling choice; None if the tile footprint
    exceeds the on-chip capacity."""
    X, Y, C, K = extents
    tx, ty, tc, tk = tiling
    footprint = tx * ty * tc + tc * tk + tx * ty * tk
    if footprint > on_chip_cap:
        return None
    n_x, n_y = _ceil_div(X, tx), _ceil_div(Y, ty)
    n_c, n_k = _ceil_div(C, tc), _ceil_div(K, tk)
    reads = X * Y * C * n_k + C * K * n_x * n_y
    writes = X * Y * K * n_c
    return reads * re_main + writes * we_main


def write_trace(result: MapResult, path, mem_units) -> None:
    """Per-vertex execution trace as CSV."""
    import csv
    import os
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as f:
        wtr = csv.writer(f)
        wtr.writerow(["vertex", "t_c"]
                     + [f"t_mem_{m.value}" for m in mem_units]
                     + ["t_stream", "t_exec", "prefetched"])
        for r in result.records:
            wtr.writerow([r.vertex, r.t_c]
                         + [r.t_mem.get(m, 0) for m in mem_units]
                         + [r.t_stream, r.t_exec, int(r.prefetched)])
    os.replace(tmp, path)
