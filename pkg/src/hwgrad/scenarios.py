"""Bundled synthetic workloads and closed-form scenarios used by the
test suite and the CLI generators.

Everything here is deterministic: the generators are parameterized,
never randomized, so reruns are byte-identical.
"""

from __future__ import annotations

import math

from .expr import Ceil, Const, Expr, Max, Param, esum
from .hwmodel import (SOC, CompUnit, ConcreteHardwareModel, MemUnit, Metric,
                      ParamBound, ParamId, ParamKind, ValueDomain)
from .workload import Vertex, VertexStats, Workload

__all__ = ["gen_dot", "gen_mlp", "gen_cnn", "gen_transformer",
           "memory_bound_workload", "compute_bound_workload",
           "three_vertex_fixture", "DotTilingScenario",
           "dot_memory_time", "dot_memsize_gradient"]


def _v(vid, kind="op", comp=None, alloc=0, read=None, write=None, extents=None):
    return Vertex(id=vid, kind=kind, extents=extents,
                  stats=VertexStats(n_comp=comp or {}, n_alloc=alloc,
                                    n_read=read or {}, n_write=write or {}))


def gen_dot(n_vectors: int = 8, length: int = 1024) -> Workload:
    """Chain of dot products: each reads two operand vectors from main
    memory and accumulates through the on-chip buffer."""
    w = Workload()
    nbytes = 4 * length
    for i in range(n_vectors):
        w.vertices.append(_v(
            f"dot{i:03d}", kind="dot",
            comp={CompUnit.vector: 2 * length},
            alloc=2 * nbytes,
            read={MemUnit.mainMem: 2 * nbytes, MemUnit.globalBuf: 2 * nbytes},
            write={MemUnit.globalBuf: 4}))
        if i:
            w.edges.append((f"dot{i-1:03d}", f"dot{i:03d}", 4))
    w.validate()
    return w


def gen_mlp(layers: int = 4, width: int = 256) -> Workload:
    w = Workload()
    for i in range(layers):
        macs = width * width
        w.vertices.append(_v(
            f"fc{i:02d}", kind="matmul",
            comp={CompUnit.systolicArray: macs},
            alloc=4 * (width * width + 2 * width),
            read={MemUnit.mainMem: 4 * width * width,
                  MemUnit.globalBuf: 4 * width},
            write={MemUnit.globalBuf: 4 * width}))
        if i:
            w.edges.append((f"fc{i-1:02d}", f"fc{i:02d}", 4 * width))
    w.validate()
    return w


def gen_cnn(depth: int = 4, size: int = 32, channels: int = 16) -> Workload:
    """Stack of 3x3 convolution layers with explicit loop extents so the
    tiling search has something to chew on."""
    w = Workload()
    for i in range(depth):
        cin = channels * (1 if i == 0 else 2)
        cout = channels * 2
        macs = size * size * cin * cout * 9
        w.vertices.append(_v(
            f"conv{i:02d}", kind="conv",
            comp={CompUnit.systolicArray: macs},
            alloc=4 * (size * size * cin + 9 * cin * cout),
            read={MemUnit.mainMem: 4 * (size * size * cin + 9 * cin * cout),
                  MemUnit.globalBuf: 4 * size * size * cin},
            write={MemUnit.globalBuf: 4 * size * size * cout},
            extents=(size, size, cin, cout)))
        if i:
            w.edges.append((f"conv{i-1:02d}", f"conv{i:02d}", 4 * size * size * cin))
    w.validate()
    return w


def gen_transformer(blocks: int = 2, d_model: int = 256, seq: int = 128) -> Workload:
    """Transformer-block skeleton as pure DFG stats (qkv, attention, ffn)."""
    w = Workload()
    prev = None
    for b in range(blocks):
        qkv = f"blk{b}.qkv"
        att = f"blk{b}.attn"
        ffn = f"blk{b}.ffn"
        w.vertices.append(_v(
            qkv, kind="matmul",
            comp={CompUnit.systolicArray: 3 * seq * d_model * d_model},
            alloc=4 * (3 * d_model * d_model),
            read={MemUnit.mainMem: 4 * 3 * d_model * d_model,
                  MemUnit.globalBuf: 4 * seq * d_model},
            write={MemUnit.globalBuf: 4 * 3 * seq * d_model}))
        w.vertices.append(_v(
            att, kind="attention",
            comp={CompUnit.systolicArray: 2 * seq * seq * d_model,
                  CompUnit.vector: seq * seq},
            alloc=4 * seq * seq,
            read={MemUnit.globalBuf: 4 * (3 * seq * d_model)},
            write={MemUnit.globalBuf: 4 * seq * d_model}))
        w.vertices.append(_v(
            ffn, kind="matmul",
            comp={CompUnit.systolicArray: 8 * seq * d_model * d_model},
            alloc=4 * (8 * d_model * d_model),
            read={MemUnit.mainMem: 4 * 8 * d_model * d_model,
                  MemUnit.globalBuf: 4 * seq * d_model},
            write={MemUnit.globalBuf: 4 * seq * d_model}))
        w.edges.append((qkv, att, 4 * 3 * seq * d_model))
        w.edges.append((att, ffn, 4 * seq * d_model))
        if prev:
            w.edges.append((prev, qkv, 4 * seq * d_model))
        prev = ffn
    w.validate()
    return w


def memory_bound_workload(n: int = 6) -> Workload:
    """t_mem exceeds t_c by well over 10x on the bundled default model."""
    w = Workload()
    for i in range(n):
        w.vertices.append(_v(
            f"m{i:02d}", comp={CompUnit.vector: 64},
            alloc=1 << 16,
            read={MemUnit.mainMem: 1 << 20},
            write={MemUnit.mainMem: 1 << 18}))
        if i:
            w.edges.append((f"m{i-1:02d}", f"m{i:02d}", 64))
    w.validate()
    return w


def compute_bound_workload(n: int = 6) -> Workload:
    """t_c exceeds t_mem by well over 10x on the bundled default model."""
    w = Workload()
    for i in range(n):
        w.vertices.append(_v(
            f"c{i:02d}", comp={CompUnit.systolicArray: 1 << 22},
            alloc=1 << 10,
            read={MemUnit.globalBuf: 1 << 10},
            write={MemUnit.globalBuf: 1 << 8}))
        if i:
            w.edges.append((f"c{i-1:02d}", f"c{i:02d}", 64))
    w.validate()
    return w


def three_vertex_fixture():
    """Hand-checkable 3-vertex chain plus a tiny concrete model with round
    metric values; used for the energy-accounting golden test."""
    values = {
        (MemUnit.globalBuf, Metric.capacity): 4096.0,
        (MemUnit.globalBuf, Metric.bandwidth): 64.0,
        (MemUnit.globalBuf, Metric.readEnergy): 2.0,
        (MemUnit.globalBuf, Metric.writeEnergy): 3.0,
        (MemUnit.globalBuf, Metric.leakagePower): 1.0,
        (MemUnit.globalBuf, Metric.area): 1.0,
        (MemUnit.globalBuf, Metric.readLatency): 1e-9,
        (MemUnit.globalBuf, Metric.writeLatency): 1e-9,
        (MemUnit.mainMem, Metric.capacity): 1e9,
        (MemUnit.mainMem, Metric.bandwidth): 16.0,
        (MemUnit.mainMem, Metric.readEnergy): 5.0,
        (MemUnit.mainMem, Metric.writeEnergy): 7.0,
        (MemUnit.mainMem, Metric.leakagePower): 2.0,
        (MemUnit.mainMem, Metric.area): 2.0,
        (MemUnit.mainMem, Metric.readLatency): 1e-8,
        (MemUnit.mainMem, Metric.writeLatency): 1e-8,
        (CompUnit.systolicArray, Metric.throughput): 16.0,
        (CompUnit.systolicArray, Metric.intEnergy): 0.5,
        (CompUnit.systolicArray, Metric.leakagePower): 1.5,
        (CompUnit.systolicArray, Metric.area): 3.0,
        (CompUnit.systolicArray, Metric.latency): 1e-9,
        (SOC, Metric.frequency): 1e9,
    }
    c = ConcreteHardwareModel(values=values)
    w = Workload()
    w.vertices.append(_v("a", comp={CompUnit.systolicArray: 128},
                         alloc=256, read={MemUnit.mainMem: 1024},
                         write={MemUnit.globalBuf: 256}))
    w.vertices.append(_v("b", comp={CompUnit.systolicArray: 4096},
                         alloc=512, read={MemUnit.globalBuf: 256},
                         write={MemUnit.globalBuf: 128}))
    w.vertices.append(_v("c", alloc=128, read={MemUnit.globalBuf: 384},
                         write={MemUnit.mainMem: 384}))
    w.edges.append(("a", "b", 256))
    w.edges.append(("b", "c", 128))
    w.validate()
    return w, c


# ---------------------------------------------------------------------------
# Tiled dot-product scenario: quantities from the closed-form analysis of
# mapping size-N vectors through a size-B buffer with P multipliers.
# ---------------------------------------------------------------------------

def dot_memory_time(n: int, b: int, t1: float, t2: float) -> float:
    """Cycles to stream a size-n vector through a size-b buffer when the
    two memory levels cost t1 and t2 per tile: ceil(n/b) * (t1 + t2)."""
    return math.ceil(n / b) * (t1 + t2)


def dot_memsize_gradient(n: int, b: int, b_ref: int, t1: float, t2: float) -> float:
    """Stall-time change from buffer size b to reference size b_ref."""
    return (math.ceil(n / b) - math.ceil(n / b_ref)) * (t1 + t2)


class DotTilingScenario:
    """Series of dot products of sizes `sizes` executed on a datapath with
    buffer size B and P multipliers, under an area budget.

    objective(B, P) = sum_i max(ceil(B/P)*t4 + 2*t5, ceil(N_i/B)*(t1+t2))
    area(B, P)      = 2*B*a_buf + P*a_mult + 2*a_add
    """

    def __init__(self, sizes=(1024, 1536, 512), t1=100.0, t2=10.0,
                 t4=2.0, t5=1.0, a_buf=0.1, a_mult=8.0, a_add=2.0,
                 area_max=150.0, b_max=4096, p_max=256):
        self.sizes = tuple(sizes)
        self.t1, self.t2, self.t4, self.t5 = t1, t2, t4, t5
        self.a_buf, self.a_mult, self.a_add = a_buf, a_mult, a_add
        self.area_max = area_max
        self.b_max, self.p_max = b_max, p_max

    def param_table(self) -> dict:
        return {
            "B": ParamBound(ParamId("B", ParamKind.arch, ValueDomain.natural),
                            1.0, float(self.b_max), 64.0),
            "P": ParamBound(ParamId("P", ParamKind.arch, ValueDomain.natural),
                            1.0, float(self.p_max), 4.0),
        }

    def objective_expr(self) -> Expr:
        b, p = Param("B"), Param("P")
        compute = Ceil(b / p) * Const(self.t4) + Const(2.0 * self.t5)
        terms = [Max(compute, Ceil(Const(float(n)) / b) * Const(self.t1 + self.t2))
                 for n in self.sizes]
        return esum(terms)

    def area_expr(self) -> Expr:
        return (Const(2.0 * self.a_buf) * Param("B")
                + Const(self.a_mult) * Param("P") + Const(2.0 * self.a_add))

    def grid(self):
        bs = [1 << i for i in range(int(math.log2(self.b_max)) + 1)]
        ps = [1 << i for i in range(int(math.log2(self.p_max)) + 1)]
        return bs, ps

    def evaluate(self, b: int, p: int):
        env = {"B": float(b), "P": float(p)}
        return self.objective_expr().eval(env), self.area_expr().eval(env)

    def sweep(self):
        """Exhaustive grid evaluation; the ground-truth oracle."""
        bs, ps = self.grid()
        rows = []
        for b in bs:
            for p in ps:
                val, a = self.evaluate(b, p)
                rows.append((b, p, val, a))
        return rows

    def sweep_min(self):
        feasible = [r for r in self.sweep() if r[3] <= self.area_max]
        return min(feasible, key=lambda r: (r[2], r[0], r[1]))
