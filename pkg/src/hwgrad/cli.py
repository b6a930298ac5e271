"""Command-line front end.

Subcommands: dgen, dsim, dopt, sweep, gen-workload.  Exit codes: 0 ok,
1 usage error, 2 input validation error, 3 non-convergence (dopt; the
results are still written).  All file outputs are written atomically
(temp file + rename) and floats are printed with 9 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys

from .dgen import generate, load_model, save_model
from .dopt import Objective, OptimizerConfig, optimize, optimize_expr
from .dsim import energy_breakdown, estimate
from .errors import GridTooLarge, ToolError
from .hwmodel import ParamKind
from .mapper import MapperConfig, map_workload, write_trace
from .scenarios import DotTilingScenario, gen_cnn, gen_dot, gen_mlp, gen_transformer
from .workload import load_workload, save_workload

MAX_GRID_POINTS = 10 ** 6


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    p = _Parser(prog="hwgrad", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("dgen", help="derive a hardware model from configs")
    g.add_argument("--arch", required=True)
    g.add_argument("--tech", required=True)
    g.add_argument("--out", required=True)

    s = sub.add_parser("dsim", help="simulate a workload on a model")
    s.add_argument("--model", required=True)
    s.add_argument("--workload", required=True)
    s.add_argument("--trace")
    s.add_argument("--report")
    s.add_argument("--override", action="append", default=[],
                   metavar="PARAM=VALUE")
    s.add_argument("--no-prefetch", action="store_true")

    o = sub.add_parser("dopt", help="gradient-descend the parameters")
    o.add_argument("--model")
    o.add_argument("--workload")
    o.add_argument("--scenario", choices=["dot"])
    o.add_argument("--objective", choices=["time", "energy", "edp"],
                   default="time")
    o.add_argument("--area-max", type=float, default=None)
    o.add_argument("--epochs", type=int, default=50)
    o.add_argument("--alpha", type=float, default=None)
    o.add_argument("--history")
    o.add_argument("--override", action="append", default=[],
                   metavar="PARAM=VALUE")

    w = sub.add_parser("sweep", help="brute-force a parameter grid")
    w.add_argument("--model")
    w.add_argument("--workload")
    w.add_argument("--scenario", choices=["dot"])
    w.add_argument("--objective", choices=["time", "energy", "edp"],
                   default="time")
    w.add_argument("--area-max", type=float, default=None)
    w.add_argument("--param", action="append", default=[],
                   metavar="NAME=V1,V2,...")
    w.add_argument("--out", required=True)

    gw = sub.add_parser("gen-workload", help="emit a bundled synthetic workload")
    gw.add_argument("kind", choices=["cnn", "mlp", "dot", "transformer"])
    gw.add_argument("--out", required=True)
    gw.add_argument("--size", type=int, default=None)
    return p


def _overrides(pairs, model):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise _UsageError(f"override must be PARAM=VALUE: '{pair}'")
        name, val = pair.split("=", 1)
        if name not in model.param_table:
            raise ToolError(f"unknown parameter '{name}'")
        out[name] = float(val)
    return out


def _specialize(model, overrides):
    assigns = model.seed_assignment()
    assigns.update(overrides)
    tech = {n: v for n, v in assigns.items()
            if model.param_table[n].param.kind is ParamKind.tech}
    arch = {n: v for n, v in assigns.items()
            if model.param_table[n].param.kind is ParamKind.arch}
    return model.specialize(tech, arch), assigns


def _atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _report_text(est, breakdown):
    lines = [
        f"runtime_s = {est.runtime:.9g}",
        f"energy_nJ = {est.energy:.9g}",
        f"power_W = {est.power:.9g}",
        f"area_mm2 = {est.area:.9g}",
    ]
    for unit, e in breakdown.items():
        lines.append(f"energy_nJ.{unit} = {e:.9g}")
    return "\n".join(lines) + "\n"


def _cmd_dgen(args):
    model = generate(args.arch, args.tech)
    save_model(model, args.out)
    print(f"wrote model with {len(model.entries)} entries to {args.out}")
    return 0


def _cmd_dsim(args):
    model = load_model(args.model)
    w = load_workload(args.workload)
    c, _ = _specialize(model, _overrides(args.override, model))
    cfg = MapperConfig(prefetch=not args.no_prefetch)
    r = map_workload(w, c, cfg)
    est = estimate(r, c)
    text = _report_text(est, energy_breakdown(r, c))
    sys.stdout.write(text)
    if args.report:
        _atomic(args.report, text)
    if args.trace:
        write_trace(r, args.trace, c.mem_units())
    return 0


def _objective(args):
    import math
    area_max = args.area_max if args.area_max is not None else math.inf
    return Objective(kind=args.objective, area_max=area_max)


def _cmd_dopt(args):
    obj = _objective(args)
    cfg = OptimizerConfig(alpha=args.alpha, max_epochs=args.epochs)
    if args.scenario == "dot":
        sc = DotTilingScenario()
        if args.area_max is not None:
            sc.area_max = args.area_max
        obj.area_max = sc.area_max
        table = sc.param_table()
        seed = {n: b.seed for n, b in table.items()}
        bs, ps = sc.grid()
        res = optimize_expr(sc.objective_expr(), sc.area_expr(), table,
                            seed, obj, cfg,
                            grids={"B": [float(b) for b in bs],
                                   "P": [float(p) for p in ps]})
    else:
        if not args.model or not args.workload:
            raise _UsageError("dopt needs --model and --workload (or --scenario)")
        model = load_model(args.model)
        w = load_workload(args.workload)
        assigns = model.seed_assignment()
        assigns.update(_overrides(args.override, model))
        res = optimize(w, model, assigns, obj, cfg)
    print(f"status = {res.status}")
    print(f"objective = {res.objective:.9g}")
    print(f"area_mm2 = {res.area:.9g}")
    for name in sorted(res.assigns):
        print(f"{name} = {res.assigns[name]:.9g}")
    if args.history:
        _write_history(args.history, res)
    return 0 if res.status in ("converged", "target") else 3


def _write_history(path, res):
    params = sorted(res.history[0][3]) if res.history else []
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as f:
        wtr = csv.writer(f)
        wtr.writerow(["epoch", "objective", "area"] + params)
        for epoch, val, area, assigns in res.history:
            wtr.writerow([epoch, f"{val:.9g}", f"{area:.9g}"]
                         + [f"{assigns[p]:.9g}" for p in params])
    os.replace(tmp, path)


def _cmd_sweep(args):
    obj = _objective(args)
    rows = []
    if args.scenario == "dot":
        sc = DotTilingScenario()
        if args.area_max is not None:
            sc.area_max = args.area_max
        obj.area_max = sc.area_max
        header = ["B", "P", "objective", "area", "is_min"]
        pts = [((b, p), val, a) for b, p, val, a in sc.sweep()]
    else:
        if not args.model or not args.workload or not args.param:
            raise _UsageError("sweep needs --model, --workload and --param "
                              "(or --scenario)")
        model = load_model(args.model)
        w = load_workload(args.workload)
        names, grids = [], []
        for spec in args.param:
            if "=" not in spec:
                raise _UsageError(f"--param must be NAME=V1,V2,...: '{spec}'")
            name, vals = spec.split("=", 1)
            if name not in model.param_table:
                raise ToolError(f"unknown parameter '{name}'")
            names.append(name)
            grids.append([float(v) for v in vals.split(",")])
        n_points = 1
        for g in grids:
            n_points *= len(g)
        if n_points > MAX_GRID_POINTS:
            raise GridTooLarge(f"{n_points} points exceeds {MAX_GRID_POINTS}")
        header = names + ["objective", "area", "is_min"]
        pts = []
        for combo in itertools.product(*grids):
            c, _ = _specialize(model, dict(zip(names, combo)))
            r = map_workload(w, c)
            est = estimate(r, c)
            pts.append((combo, obj.value(est), est.area))

    feasible = [p for p in pts if p[2] <= obj.area_max] or pts
    best = min(feasible, key=lambda p: (p[1],) + tuple(p[0]))
    tmp = f"{args.out}.tmp"
    with open(tmp, "w", newline="") as f:
        wtr = csv.writer(f)
        wtr.writerow(header)
        for combo, val, area in pts:
            wtr.writerow([f"{x:.9g}" for x in combo]
                         + [f"{val:.9g}", f"{area:.9g}",
                            int(combo == best[0])])
    os.replace(tmp, args.out)
    print(f"minimum objective {best[1]:.9g} at "
          + ", ".join(f"{x:.9g}" for x in best[0]))
    return 0


def _cmd_gen_workload(args):
    builders = {
        "cnn": lambda n: gen_cnn(depth=n or 4),
        "mlp": lambda n: gen_mlp(layers=n or 4),
        "dot": lambda n: gen_dot(n_vectors=n or 8),
        "transformer": lambda n: gen_transformer(blocks=n or 2),
    }
    w = builders[args.kind](args.size)
    save_workload(w, args.out)
    print(f"wrote {len(w.vertices)} vertices, {len(w.edges)} edges to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    handlers = {
        "dgen": _cmd_dgen, "dsim": _cmd_dsim, "dopt": _cmd_dopt,
        "sweep": _cmd_sweep, "gen-workload": _cmd_gen_workload,
    }
    try:
        return handlers[args.cmd](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ToolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
