"""Backward pass and gradient-descent optimization.

Per-vertex stall gradients (t_min - t_unit) and dynamic energies are
accumulated per hardware unit, exactly as the forward records report
them.  Parameter gradients take the exact chain-rule route: the
objective is rebuilt symbolically over per-metric placeholders from the
execution records, differentiated once per metric, then routed through
the technology-to-component bipartite graph (metric expression
derivatives) down to individual parameters.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

from .expr import Const, Exp, Expr, Mul, replace_params
from .hwmodel import SOC, HardwareModel, Metric, ParamKind
from .mapper import MapperConfig, MapResult, map_workload
from .dsim import (RUNTIME_PARAM, area_expr, cycles_expr, energy_expr,
                   estimate, metric_env, metric_param)

__all__ = ["Objective", "OptimizerConfig", "GradientAccumulator",
           "BipartiteGraph", "backward_pass", "apply_update", "optimize",
           "optimize_expr", "rank_technology_targets", "OptimizeResult"]


@dataclass
class Objective:
    kind: str = "time"            # time | energy | edp
    area_max: float = math.inf    # mm^2
    lam: float = 0.0              # Lagrange multiplier on (area - area_max)
    penalty: bool = False         # multiply by e^((area - A)/A)

    def value(self, est) -> float:
        if self.kind == "time":
            base = est.runtime
        elif self.kind == "energy":
            base = est.energy
        elif self.kind == "edp":
            base = est.energy * est.runtime
        else:
            raise ValueError(f"unknown objective '{self.kind}'")
        if self.lam:
            base = base + self.lam * (est.area - self.area_max)
        if self.penalty and math.isfinite(self.area_max):
            base = base * math.exp((est.area - self.area_max) / self.area_max)
        return base


@dataclass
class OptimizerConfig:
    alpha: float | None = None    # None: auto-scale so epoch 1 moves <= 10%
    max_epochs: int = 50
    eps: float = 1e-3             # convergence: max relative param change
    target: float | None = None   # stop once objective <= target
    polish: bool = True           # greedy integer-move refinement at the end
    mapper: MapperConfig = field(default_factory=MapperConfig)


@dataclass
class GradientAccumulator:
    unit_time: dict = field(default_factory=dict)    # unit -> cycles
    unit_energy: dict = field(default_factory=dict)  # unit -> nJ
    metric: dict = field(default_factory=dict)       # (unit, Metric) -> dF/dmetric
    param: dict = field(default_factory=dict)        # name -> dF/dparam


class BipartiteGraph:
    """Edges between parameters and the (unit, metric) expressions they
    occur in; each edge carries the symbolic partial d(metric)/d(param)."""

    def __init__(self, model: HardwareModel):
        self.edges = {}  # name -> list of ((unit, metric), Expr)
        for key, e in model.entries.items():
            for p in e.params():
                self.edges.setdefault(p, []).append((key, e.diff(p)))

    def param_grads(self, metric_grads: dict, env: dict) -> dict:
        out = {}
        for name, edges in sorted(self.edges.items()):
            g = 0.0
            for key, de in edges:
                mg = metric_grads.get(key, 0.0)
                if mg:
                    g += mg * de.eval(env)
            out[name] = g
        return out


def objective_expr(r: MapResult, mem_units, comp_units, obj: Objective) -> Expr:
    """The optimization objective over per-metric placeholder parameters."""
    rt = cycles_expr(r, mem_units, comp_units) / metric_param(SOC, Metric.frequency)
    if obj.kind == "time":
        f = rt
    else:
        e = replace_params(energy_expr(r, mem_units, comp_units),
                           {RUNTIME_PARAM: rt})
        f = e if obj.kind == "energy" else Mul(e, rt)
    a = area_expr(mem_units, comp_units)
    if obj.lam:
        f = f + Const(obj.lam) * (a - Const(obj.area_max))
    if obj.penalty and math.isfinite(obj.area_max):
        f = Mul(f, Exp((a - Const(obj.area_max)) / Const(obj.area_max)))
    return f


def backward_pass(r: MapResult, h: HardwareModel, assigns: dict,
                  obj: Objective, graph: BipartiteGraph | None = None) -> GradientAccumulator:
    acc = GradientAccumulator()
    c = h.specialize(_by_kind(h, assigns, ParamKind.tech),
                     _by_kind(h, assigns, ParamKind.arch))
    est = estimate(r, c)

    # Unit-level stall/energy accumulation straight off the records; a
    # unit whose latency is fully hidden (t_unit == t_min) contributes 0.
    for rec in r.records:
        for m, tm in rec.t_mem.items():
            acc.unit_time[m] = acc.unit_time.get(m, 0) + (rec.t_min - tm)
        for u, ops in rec.ops.items():
            tu = math.ceil(ops / c.lookup(u, Metric.throughput))
            acc.unit_time[u] = acc.unit_time.get(u, 0) + (rec.t_min - tu)
    for m in c.mem_units():
        st = r.memory[m]
        acc.unit_energy[m] = (st.n_reads * c.lookup(m, Metric.readEnergy)
                              + st.n_writes * c.lookup(m, Metric.writeEnergy))
    for u in c.comp_units():
        acc.unit_energy[u] = r.compute[u].n_ops * c.lookup(u, Metric.intEnergy)

    # Metric-level gradients of the objective, then bipartite routing.
    f = objective_expr(r, c.mem_units(), c.comp_units(), obj)
    ph_env = metric_env(c)
    for key in h.entries:
        d = f.diff(metric_param(*key).name)
        acc.metric[key] = d.eval(ph_env)
    graph = graph or BipartiteGraph(h)
    acc.param = graph.param_grads(acc.metric, assigns)
    return acc


def _by_kind(h: HardwareModel, assigns: dict, kind: ParamKind) -> dict:
    return {n: v for n, v in assigns.items()
            if n in h.param_table and h.param_table[n].param.kind is kind}


def _area_coupled(h: HardwareModel) -> set:
    out = set()
    for (u, q), e in h.entries.items():
        if q is Metric.area:
            out |= e.params()
    return out


def auto_alpha(assigns: dict, grads: dict, frac: float = 0.1) -> float:
    """Largest step such that no parameter moves more than `frac` of its
    current magnitude on the first epoch."""
    best = None
    for name, g in grads.items():
        if g == 0.0:
            continue
        limit = frac * max(abs(assigns.get(name, 1.0)), 1e-12) / abs(g)
        best = limit if best is None else min(best, limit)
    return best if best is not None else 0.0


def apply_update(assigns: dict, grads: GradientAccumulator | dict,
                 alpha: float, h: HardwareModel, obj: Objective,
                 area: float | None = None) -> dict:
    """Scaled gradient-descent step with bound clamping.  When the design
    is over the area budget, area-coupled parameters are forced downward
    (the sign-of-(a - A) rule)."""
    g = grads.param if isinstance(grads, GradientAccumulator) else grads
    coupled = _area_coupled(h)
    over = area is not None and math.isfinite(obj.area_max) and area > obj.area_max
    out = {}
    for name, v in assigns.items():
        bound = h.param_table.get(name)
        delta = -alpha * g.get(name, 0.0)
        if over and name in coupled:
            # Shrink by at least 10% so large naturals do not stall on
            # sub-integer steps while the budget is violated.
            delta = -max(abs(delta), 0.1 * abs(v))
        nv = v + delta
        out[name] = bound.clamp(nv) if bound else nv
    return out


@dataclass
class OptimizeResult:
    assigns: dict
    objective: float
    area: float
    history: list  # (epoch, objective, area, assigns)
    status: str    # converged | max_epochs | target


def optimize(w, h: HardwareModel, seed: dict, obj: Objective,
             cfg: OptimizerConfig | None = None) -> OptimizeResult:
    """Epoch loop: specialize -> map -> estimate -> backward -> update,
    tracking the best feasible point; finishes with a greedy integer-move
    polish so natural parameters settle on the true grid optimum."""
    cfg = cfg or OptimizerConfig()
    graph = BipartiteGraph(h)

    def evaluate(assigns):
        c = h.specialize(_by_kind(h, assigns, ParamKind.tech),
                         _by_kind(h, assigns, ParamKind.arch))
        r = map_workload(w, c, cfg.mapper)
        return r, estimate(r, c)

    assigns = dict(seed)
    history = []
    best = None  # (infeasible flag, objective, assigns, area)
    alpha = cfg.alpha
    status = "max_epochs"
    for epoch in range(cfg.max_epochs):
        r, est = evaluate(assigns)
        val = obj.value(est)
        history.append((epoch, val, est.area, dict(assigns)))
        key = (not est.area <= obj.area_max, val)
        if best is None or key < (best[0], best[1]):
            best = (key[0], val, dict(assigns), est.area)
        if cfg.target is not None and val <= cfg.target:
            status = "target"
            break
        acc = backward_pass(r, h, assigns, obj, graph)
        if alpha is None:
            alpha = auto_alpha(assigns, acc.param)
        nxt = apply_update(assigns, acc, alpha, h, obj, area=est.area)
        delta = max((abs(nxt[n] - assigns[n]) / max(abs(assigns[n]), 1e-12)
                     for n in assigns), default=0.0)
        assigns = nxt
        if delta < cfg.eps:
            status = "converged"
            break

    if cfg.polish:
        naturals = [n for n, b in h.param_table.items()
                    if b.param.domain.value == "natural"]
        def score(a):
            _, est = evaluate(a)
            return _score_key(est.area <= obj.area_max,
                              obj.value(est), est.area)
        start = dict(best[2])
        polished, _ = _greedy_polish(score, start, h.param_table, naturals)
        _, est_p = evaluate(polished)
        val_p = obj.value(est_p)
        infeas_p = not est_p.area <= obj.area_max
        if (infeas_p, val_p) < (best[0], best[1]):
            best = (infeas_p, val_p, polished, est_p.area)

    return OptimizeResult(assigns=best[2], objective=best[1], area=best[3],
                          history=history, status=status)


def _score_key(feasible: bool, value: float, area: float) -> tuple:
    """Lexicographic polish ranking: get feasible first (by shrinking
    area), then minimize the objective, then prefer smaller area."""
    if feasible:
        return (0, value, area)
    return (1, area, value)


def _snap(v: float, grid) -> float:
    """Nearest value in a sorted grid (ties toward the smaller value)."""
    i = bisect.bisect_left(grid, v)
    cands = grid[max(0, i - 1):i + 1] or grid[-1:]
    return min(cands, key=lambda x: (abs(x - v), x))


def _moves(v, name, grids):
    if grids and name in grids:
        g = grids[name]
        i = bisect.bisect_left(g, v)
        out = [_snap(v * 2, g), _snap(v / 2, g)]
        if i + 1 < len(g):
            out.append(g[i + 1])
        if i > 0:
            out.append(g[i - 1])
        return out
    return (v * 2, v // 2 if v >= 2 else 1, v + 1, v - 1)


def _greedy_polish(score, assigns, param_table, naturals, budget=200,
                   grids=None):
    """Coordinate moves {x2, /2, +1, -1} on natural parameters, greedily
    accepted; covers the constraint-boundary checks the descent may skip.
    With `grids`, moves are restricted to the given per-parameter value
    lists instead."""
    cur = dict(assigns)
    cur_sc = score(cur)
    evals = 0
    improved = True
    while improved and evals < budget:
        improved = False
        for name in naturals:
            bound = param_table[name]
            v = cur[name]
            for cand in _moves(v, name, grids):
                cand = bound.clamp(float(cand))
                if cand == v:
                    continue
                trial = dict(cur)
                trial[name] = cand
                sc = score(trial)
                evals += 1
                if sc < cur_sc:
                    cur, cur_sc = trial, sc
                    improved = True
                    break
                if evals >= budget:
                    break
            if evals >= budget:
                break
    return cur, cur_sc


def optimize_expr(objective: Expr, area: Expr, param_table: dict,
                  seed: dict, obj: Objective,
                  cfg: OptimizerConfig | None = None,
                  grids: dict | None = None) -> OptimizeResult:
    """Gradient descent directly on an expression objective (used for
    closed-form scenarios); same update, clamping and polish machinery as
    the workload path.  `grids` optionally restricts named parameters to
    sorted value lists; the result is then snapped and polished on-grid."""
    cfg = cfg or OptimizerConfig()
    naturals = [n for n, b in param_table.items()
                if b.param.domain.value == "natural"]
    composed = objective
    if obj.lam:
        composed = composed + Const(obj.lam) * (area - Const(obj.area_max))
    if obj.penalty and math.isfinite(obj.area_max):
        composed = Mul(composed, Exp((area - Const(obj.area_max))
                                     / Const(obj.area_max)))
    derivs = {n: composed.diff(n) for n in seed}

    def full(assigns):
        return composed.eval(assigns), area.eval(assigns)

    def score(assigns):
        v, a = full(assigns)
        return _score_key(a <= obj.area_max, v, a)

    assigns = dict(seed)
    history = []
    best = None
    alpha = cfg.alpha
    status = "max_epochs"
    coupled = area.params()
    for epoch in range(cfg.max_epochs):
        val, a = full(assigns)
        history.append((epoch, val, a, dict(assigns)))
        key = (not a <= obj.area_max, val)
        if best is None or key < (best[0], best[1]):
            best = (key[0], val, dict(assigns), a)
        if cfg.target is not None and val <= cfg.target:
            status = "target"
            break
        grads = {n: derivs[n].eval(assigns) for n in assigns}
        over = math.isfinite(obj.area_max) and a > obj.area_max
        if alpha is None:
            alpha = auto_alpha(assigns, grads)
        nxt = {}
        for name, v in assigns.items():
            delta = -alpha * grads[name]
            if over and name in coupled:
                delta = -max(abs(delta), 0.1 * abs(v))
            bound = param_table.get(name)
            nv = v + delta
            nxt[name] = bound.clamp(nv) if bound else nv
        delta_rel = max((abs(nxt[n] - assigns[n]) / max(abs(assigns[n]), 1e-12)
                         for n in assigns), default=0.0)
        assigns = nxt
        if delta_rel < cfg.eps:
            status = "converged"
            break

    start = dict(best[2])
    if grids:
        start = {n: (_snap(v, grids[n]) if n in grids else v)
                 for n, v in start.items()}
        v0, a0 = full(start)
        best = (not a0 <= obj.area_max, v0, dict(start), a0)
    if cfg.polish and naturals:
        polished, _ = _greedy_polish(score, start, param_table, naturals,
                                     grids=grids)
        val_p, area_p = full(polished)
        infeas_p = not area_p <= obj.area_max
        if (infeas_p, val_p) < (best[0], best[1]):
            best = (infeas_p, val_p, polished, area_p)
    return OptimizeResult(assigns=best[2], objective=best[1], area=best[3],
                          history=history, status=status)


def rank_technology_targets(grads: GradientAccumulator | dict,
                            assigns: dict, exclude=()) -> list:
    """Parameters ordered by normalized sensitivity |g x p|, descending;
    stable for ties and zero gradients.  `exclude` drops parameters that
    scale everything uniformly (typically the clock frequency) and would
    otherwise always rank first on a time objective."""
    g = grads.param if isinstance(grads, GradientAccumulator) else grads
    names = [n for n in assigns if n not in set(exclude)]
    return sorted(names, key=lambda n: -abs(g.get(n, 0.0) * assigns[n]))
