"""Turn a mapping result into the four performance estimates.

Both the concrete and the symbolic paths share one expression builder:
the formulas are constructed over per-metric placeholder parameters
(named ``unit.metric``), then either evaluated against the concrete
model's values or re-expressed over the hardware model's parameter
expressions.  This guarantees the two paths agree bit-for-bit.

Units: runtime [s], energy [nJ], power [W], area [mm^2].  Leakage power
is stored in mW, so leakage energy in nJ is ``mW x s x 1e6``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import Ceil, Const, Expr, Max, Param, esum, replace_params
from .hwmodel import (SOC, ConcreteHardwareModel, HardwareModel, MemUnit,
                      Metric)
from .mapper import MapResult

__all__ = ["PerfEstimate", "estimate", "estimate_symbolic",
           "metric_param", "cycles_expr", "energy_expr", "area_expr",
           "energy_breakdown", "MW_S_TO_NJ", "RUNTIME_PARAM"]

MW_S_TO_NJ = 1e6
RUNTIME_PARAM = "t_W"


@dataclass(frozen=True)
class PerfEstimate:
    runtime: float   # s
    energy: float    # nJ
    power: float     # W
    area: float      # mm^2


def metric_param(unit, metric: Metric) -> Param:
    name = unit.value if hasattr(unit, "value") else str(unit)
    return Param(f"{name}.{metric.value}")


def metric_env(c: ConcreteHardwareModel) -> dict:
    return {metric_param(u, q).name: v for (u, q), v in c.values.items()}


def cycles_expr(r: MapResult, mem_units, comp_units,
                stream_mem: MemUnit = MemUnit.mainMem) -> Expr:
    """Total cycle count rebuilt symbolically from the execution records,
    over bandwidth/throughput placeholders.  Matches the mapper's count
    exactly at the concrete point; Max nodes route gradients to the
    critical path only."""
    if stream_mem not in mem_units and mem_units:
        stream_mem = mem_units[-1]
    terms = []
    credit = 0
    for rec in r.records:
        parts = []
        if rec.ops:
            parts.append(esum(Ceil(Const(float(ops)) / metric_param(u, Metric.throughput))
                              for u, ops in rec.ops.items()))
        for m in mem_units:
            if m in rec.t_mem:
                rbytes, wbytes = rec.mem_bytes.get(m, (0, 0))
                parts.append(Ceil(Const(float(rbytes + wbytes))
                                  / metric_param(m, Metric.bandwidth)))
        if not parts:
            t = Const(0.0)
        else:
            t = parts[0]
            for p in parts[1:]:
                t = Max(t, p)
        if rec.t_stream:
            t = t + Ceil(Const(float(rec.alloc)) / metric_param(stream_mem, Metric.bandwidth))
        terms.append(t)
        credit += rec.credit
    total = esum(terms)
    if credit:
        total = total - Const(float(credit))
    return total


def energy_expr(r: MapResult, mem_units, comp_units) -> Expr:
    """Total energy over metric placeholders and the runtime parameter
    `t_W` [s]: reads x readEnergy + writes x writeEnergy + leakage x t_W
    per memory, then ops x intEnergy + leakage x t_W per compute unit."""
    t_w = Param(RUNTIME_PARAM)
    terms = []
    for m in mem_units:
        st = r.memory[m]
        terms.append(Const(float(st.n_reads)) * metric_param(m, Metric.readEnergy)
                     + Const(float(st.n_writes)) * metric_param(m, Metric.writeEnergy)
                     + metric_param(m, Metric.leakagePower) * (t_w * Const(MW_S_TO_NJ)))
    for u in comp_units:
        st = r.compute[u]
        terms.append(Const(float(st.n_ops)) * metric_param(u, Metric.intEnergy)
                     + metric_param(u, Metric.leakagePower) * (t_w * Const(MW_S_TO_NJ)))
    return esum(terms)


def area_expr(mem_units, comp_units) -> Expr:
    return esum([metric_param(m, Metric.area) for m in mem_units]
                + [metric_param(u, Metric.area) for u in comp_units])


def runtime_expr(r: MapResult) -> Expr:
    return Const(float(r.total_cycles)) / metric_param(SOC, Metric.frequency)


def estimate(r: MapResult, c: ConcreteHardwareModel) -> PerfEstimate:
    mem_units, comp_units = c.mem_units(), c.comp_units()
    env = metric_env(c)
    runtime = runtime_expr(r).eval(env)
    env[RUNTIME_PARAM] = runtime
    energy = energy_expr(r, mem_units, comp_units).eval(env)
    area = area_expr(mem_units, comp_units).eval(env)
    power = (energy * 1e-9) / runtime if runtime > 0 else 0.0
    return PerfEstimate(runtime=runtime, energy=energy, power=power, area=area)


def estimate_symbolic(r: MapResult, h: HardwareModel) -> dict:
    """The same formulas as `estimate`, as expressions over the hardware
    model's own parameters.  Evaluating them at the specialization point
    reproduces `estimate`'s numbers exactly."""
    mem_units = h.mem_units()
    comp_units = h.comp_units()
    mapping = {metric_param(u, q).name: e for (u, q), e in h.entries.items()}
    rt = Const(float(r.total_cycles)) / h.expr(SOC, Metric.frequency)
    mapping[RUNTIME_PARAM] = rt
    return {
        "runtime": rt,
        "energy": replace_params(energy_expr(r, mem_units, comp_units), mapping),
        "area": replace_params(area_expr(mem_units, comp_units), mapping),
    }


def energy_breakdown(r: MapResult, c: ConcreteHardwareModel) -> dict:
    """Per-unit dynamic + leakage energy [nJ] for reports."""
    est = estimate(r, c)
    out = {}
    for m in c.mem_units():
        st = r.memory[m]
        out[m.value] = (st.n_reads * c.lookup(m, Metric.readEnergy)
                        + st.n_writes * c.lookup(m, Metric.writeEnergy)
                        + c.lookup(m, Metric.leakagePower) * est.runtime * MW_S_TO_NJ)
    for u in c.comp_units():
        st = r.compute[u]
        out[u.value] = (st.n_ops * c.lookup(u, Metric.intEnergy)
                        + c.lookup(u, Metric.leakagePower) * est.runtime * MW_S_TO_NJ)
    return out
