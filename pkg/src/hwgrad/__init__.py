"""Differentiable cost models for accelerator hardware.

The package turns a hardware description into a set of algebraic cost
expressions, simulates workload graphs on top of them, and runs gradient
descent over the hardware parameters under an area budget.
"""

from .expr import (
    Add, Branch, Ceil, Const, Div, Exp, Expr, Max, Min, Mul, Param, Sub,
    esum, finite_diff, parse, replace_params, rename_params, to_text,
)
from .hwmodel import (
    CompUnit, ConcreteHardwareModel, HardwareModel, MemUnit, Metric,
    ParamBound, ParamId, ParamKind, SOC, ValueDomain,
)
from .dgen import generate, load_model, save_model
from .workload import (
    Vertex, VertexStats, Workload, compute_merge, load_workload,
    save_workload, split_vertex, workload_optimize,
)
from .mapper import MapperConfig, MapResult, map_workload, tiling_search
from .dsim import PerfEstimate, energy_breakdown, estimate, estimate_symbolic
from .dopt import (
    Objective, OptimizerConfig, OptimizeResult, optimize, optimize_expr,
    rank_technology_targets,
)

__version__ = "0.1.0"
