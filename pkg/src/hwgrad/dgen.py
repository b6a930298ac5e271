"""Model generator: derive a HardwareModel from an architecture config,
a device performance library, and an accelerator template library.

Input files are line-oriented sectioned key-value text::

    [globalBuf]
    type = sram
    capacity = 1048576

The device libraries bundled here are affine-by-default formulas over the
technology parameters, anchored to a 40nm-style reference point; users can
supply their own libraries programmatically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (ParseError, UnsupportedMemType, UnsupportedTemplate,
                     ValidationError)
from .expr import Ceil, Const, Expr, Param, rename_params
from .hwmodel import (COMP_METRICS, MEM_METRICS, SOC, CompUnit, HardwareModel,
                      MemUnit, Metric, ParamBound, ParamId, ParamKind,
                      ValueDomain)

__all__ = [
    "ArchSpec", "DeviceMemLib", "DevicePrimLib", "AccelTemplateLib",
    "default_mem_lib", "default_prim_lib", "default_template_lib",
    "derive_memory_model", "derive_compute_model",
    "parse_arch", "parse_tech", "generate",
    "save_model", "load_model",
]

MEM_TYPES = ("sram", "rram", "dram")
PRIMS = ("adder", "ff", "mult")

MEM_TECH_PARS = ("wireCap", "wireResist", "cellReadLatency", "cellAccessDevice",
                 "cellReadPower", "cellLeakagePower", "cellArea",
                 "peripheralLogicNode")
LOGIC_TECH_PARS = ("node", "wireCap", "wireResist")

# Architectural parameters per compute unit.
COMP_ARCH_PARS = {
    CompUnit.systolicArray: ("sysArrX", "sysArrY", "sysArrN"),
    CompUnit.vector: ("vectDataWidth", "vectN"),
    CompUnit.macTree: ("mTreeX", "mTreeY", "mTreeTileX", "mTreeTileY"),
    CompUnit.fpu: ("fpuN",),
}
MEM_ARCH_PARS = ("capacity", "bankSize", "nReadPorts")

_NATURAL_TECH = {"cellAccessDevice", "peripheralLogicNode", "node"}

# Bytes per cycle contributed by one read port.
BUS_BYTES_PER_PORT = 16.0


@dataclass
class ArchSpec:
    mem_units: list
    comp_units: list
    mem_type: dict            # MemUnit -> "sram" | "rram" | "dram"
    arch_params: dict         # name -> value (unit-scoped for memories)

    def validate(self):
        if not self.mem_units:
            raise ValidationError("architecture has no memory units")
        if not self.comp_units:
            raise ValidationError("architecture has no compute units")
        for m in self.mem_units:
            if m not in self.mem_type:
                raise ValidationError(f"memory unit {m.value} has no type assigned")
            if self.mem_type[m] not in MEM_TYPES:
                raise UnsupportedMemType(
                    f"{m.value}: unknown memory type '{self.mem_type[m]}'")


@dataclass
class DeviceMemLib:
    """(memType, metric) -> Expr over that type's technology parameters and
    the placeholder arch parameters capacity/bankSize/nReadPorts."""

    entries: dict = field(default_factory=dict)

    def expr(self, mem_type: str, metric: Metric) -> Expr:
        try:
            return self.entries[(mem_type, metric)]
        except KeyError:
            raise UnsupportedMemType(
                f"no model for ({mem_type}, {metric.value})") from None


@dataclass
class DevicePrimLib:
    """(primitive, metric) -> Expr over logic technology parameters."""

    entries: dict = field(default_factory=dict)

    def expr(self, prim: str, metric: Metric) -> Expr:
        try:
            return self.entries[(prim, metric)]
        except KeyError:
            raise UnsupportedTemplate(
                f"no primitive model for ({prim}, {metric.value})") from None


@dataclass
class AccelTemplateLib:
    """(CompUnit, metric) -> rule(prims) -> Expr."""

    rules: dict = field(default_factory=dict)

    def compose(self, prims: DevicePrimLib, unit: CompUnit, metric: Metric) -> Expr:
        try:
            rule = self.rules[(unit, metric)]
        except KeyError:
            raise UnsupportedTemplate(
                f"no template for ({unit.value}, {metric.value})") from None
        return rule(prims)


def _tp(mem_type: str, name: str) -> Param:
    return Param(f"{mem_type}_{name}")


def default_mem_lib() -> DeviceMemLib:
    """Affine 40nm-style memory formulas, shared across memory types; the
    technology parameter values (not the formulas) distinguish sram, rram
    and dram."""
    lib = DeviceMemLib()
    for t in MEM_TYPES:
        wc, wr = _tp(t, "wireCap"), _tp(t, "wireResist")
        crl, crp = _tp(t, "cellReadLatency"), _tp(t, "cellReadPower")
        clp, ca = _tp(t, "cellLeakagePower"), _tp(t, "cellArea")
        cap, bank, ports = Param("capacity"), Param("bankSize"), Param("nReadPorts")
        lib.entries[(t, Metric.readEnergy)] = 0.005 * wc + 0.01 * crp
        lib.entries[(t, Metric.writeEnergy)] = 0.008 * wc + 0.012 * crp
        lib.entries[(t, Metric.readLatency)] = 1e-9 * (crl + 0.1 * wr)
        lib.entries[(t, Metric.writeLatency)] = 1e-9 * (1.5 * crl + 0.1 * wr)
        lib.entries[(t, Metric.leakagePower)] = clp * cap + 0.02 * Ceil(cap / bank)
        lib.entries[(t, Metric.area)] = 1e-6 * ca * cap + 0.001 * ports
        lib.entries[(t, Metric.capacity)] = cap
        lib.entries[(t, Metric.bandwidth)] = Const(BUS_BYTES_PER_PORT) * ports
    return lib


# Relative weight of each primitive in latency/energy/leakage/area.
_PRIM_SCALE = {"mult": 1.0, "adder": 0.35, "ff": 0.15}


def default_prim_lib() -> DevicePrimLib:
    lib = DevicePrimLib()
    node = Param("logic_node")
    wc, wr = Param("logic_wireCap"), Param("logic_wireResist")
    for prim, s in _PRIM_SCALE.items():
        lib.entries[(prim, Metric.latency)] = s * 1e-12 * (3.0 * node + 5.0 * wc * wr)
        lib.entries[(prim, Metric.intEnergy)] = s * (2.0e-5 * node + 1.0e-5 * wc)
        lib.entries[(prim, Metric.leakagePower)] = s * 1.0e-6 * node
        lib.entries[(prim, Metric.area)] = s * 4.0e-7 * node * node
    return lib


def default_template_lib() -> AccelTemplateLib:
    lib = AccelTemplateLib()
    r = lib.rules

    def prim_sum(metric, names=PRIMS):
        def mk(prims):
            out = None
            for n in names:
                e = prims.expr(n, metric)
                out = e if out is None else out + e
            return out
        return mk

    sa_n = lambda: Param("sysArrN") * Param("sysArrX") * Param("sysArrY")
    r[(CompUnit.systolicArray, Metric.area)] = \
        lambda p: sa_n() * prim_sum(Metric.area)(p)
    r[(CompUnit.systolicArray, Metric.throughput)] = lambda p: sa_n()
    r[(CompUnit.systolicArray, Metric.intEnergy)] = prim_sum(Metric.intEnergy)
    r[(CompUnit.systolicArray, Metric.leakagePower)] = \
        lambda p: sa_n() * prim_sum(Metric.leakagePower)(p)
    r[(CompUnit.systolicArray, Metric.latency)] = \
        prim_sum(Metric.latency, ("mult", "adder"))

    vect = lambda: Param("vectN")
    r[(CompUnit.vector, Metric.area)] = \
        lambda p: vect() * (Param("vectDataWidth") / 32.0) * prim_sum(Metric.area, ("mult", "adder"))(p)
    r[(CompUnit.vector, Metric.throughput)] = lambda p: vect()
    r[(CompUnit.vector, Metric.intEnergy)] = prim_sum(Metric.intEnergy, ("mult", "adder"))
    r[(CompUnit.vector, Metric.leakagePower)] = \
        lambda p: vect() * prim_sum(Metric.leakagePower, ("mult", "adder"))(p)
    r[(CompUnit.vector, Metric.latency)] = prim_sum(Metric.latency, ("mult", "adder"))

    r[(CompUnit.macTree, Metric.area)] = \
        lambda p: Param("mTreeX") * Param("mTreeY") * prim_sum(Metric.area, ("mult", "adder"))(p) \
        + Param("mTreeTileX") * Param("mTreeTileY") * p.expr("ff", Metric.area)
    r[(CompUnit.macTree, Metric.throughput)] = \
        lambda p: Param("mTreeTileX") * Param("mTreeTileY")
    r[(CompUnit.macTree, Metric.intEnergy)] = prim_sum(Metric.intEnergy, ("mult", "adder"))
    r[(CompUnit.macTree, Metric.leakagePower)] = \
        lambda p: Param("mTreeX") * Param("mTreeY") * prim_sum(Metric.leakagePower, ("mult", "adder"))(p)
    # Adder-tree depth grows with the reduction dimension.
    r[(CompUnit.macTree, Metric.latency)] = \
        lambda p: p.expr("mult", Metric.latency) + Param("mTreeY") * p.expr("adder", Metric.latency)

    # Floating-point datapath modeled as a scaled integer MAC.
    FPU_SCALE, FPU_DEPTH = 4.0, 3.0
    r[(CompUnit.fpu, Metric.area)] = \
        lambda p: Param("fpuN") * FPU_SCALE * prim_sum(Metric.area)(p)
    r[(CompUnit.fpu, Metric.throughput)] = lambda p: Param("fpuN")
    r[(CompUnit.fpu, Metric.intEnergy)] = \
        lambda p: FPU_SCALE * prim_sum(Metric.intEnergy, ("mult", "adder"))(p)
    r[(CompUnit.fpu, Metric.leakagePower)] = \
        lambda p: Param("fpuN") * FPU_SCALE * prim_sum(Metric.leakagePower)(p)
    r[(CompUnit.fpu, Metric.latency)] = \
        lambda p: FPU_DEPTH * prim_sum(Metric.latency, ("mult", "adder"))(p)
    return lib


def derive_memory_model(spec: ArchSpec, lib: DeviceMemLib,
                        m: MemUnit, q: Metric) -> Expr:
    """H(m, q) := memlib(type(m), q), with capacity/bankSize/nReadPorts
    renamed to unit-scoped parameters so two units of the same type keep
    distinct architectural knobs."""
    if m not in spec.mem_units:
        raise ValidationError(f"{m.value} not in architecture")
    e = lib.expr(spec.mem_type[m], q)
    scoped = {name: f"{m.value}_{name}" for name in MEM_ARCH_PARS}
    return rename_params(e, scoped)


def derive_compute_model(spec: ArchSpec, prims: DevicePrimLib,
                         templ: AccelTemplateLib, c: CompUnit, q: Metric) -> Expr:
    if c not in spec.comp_units:
        raise ValidationError(f"{c.value} not in architecture")
    return templ.compose(prims, c, q)


# ---------------------------------------------------------------------------
# Config file parsing
# ---------------------------------------------------------------------------

def _parse_sections(path) -> dict:
    """Parse `[section]` / `key = value` text into {section: {key: value}}.
    Values keep their raw string form; '#' starts a comment."""
    sections = {}
    current = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if not name:
                    raise ParseError(str(path), lineno, "empty section name")
                current = sections.setdefault(name, {})
                continue
            if "=" not in line:
                raise ParseError(str(path), lineno, f"expected 'key = value': {line!r}")
            if current is None:
                raise ParseError(str(path), lineno, "key outside any [section]")
            key, val = (s.strip() for s in line.split("=", 1))
            if not key or not val:
                raise ParseError(str(path), lineno, f"malformed entry: {line!r}")
            current[key] = (val, lineno)
    return sections


def _num(path, key, raw):
    val, lineno = raw
    try:
        return float(val)
    except ValueError:
        raise ParseError(str(path), lineno, f"{key}: not a number: {val!r}") from None


def parse_arch(path) -> ArchSpec:
    sections = _parse_sections(path)
    mem_units, comp_units = [], []
    mem_type, params = {}, {}
    if "soc" not in sections or "frequency" not in sections["soc"]:
        raise ValidationError(f"{path}: missing [soc] frequency")
    params["frequency"] = _num(path, "frequency", sections["soc"]["frequency"])
    for name, body in sections.items():
        if name == "soc":
            continue
        if name in MemUnit.__members__:
            m = MemUnit(name)
            mem_units.append(m)
            if "type" not in body:
                raise ValidationError(f"{path}: [{name}] missing memory type")
            mem_type[m] = body["type"][0]
            for key in MEM_ARCH_PARS:
                if key not in body:
                    raise ValidationError(f"{path}: [{name}] missing '{key}'")
                params[f"{name}_{key}"] = _num(path, key, body[key])
        elif name in CompUnit.__members__:
            c = CompUnit(name)
            comp_units.append(c)
            for key in COMP_ARCH_PARS[c]:
                if key not in body:
                    raise ValidationError(f"{path}: [{name}] missing '{key}'")
                params[key] = _num(path, key, body[key])
        else:
            raise ValidationError(f"{path}: unknown section [{name}]")
    spec = ArchSpec(mem_units=mem_units, comp_units=comp_units,
                    mem_type=mem_type, arch_params=params)
    spec.validate()
    return spec


def parse_tech(path) -> dict:
    """Tech file -> flat assignment over scoped technology parameters."""
    sections = _parse_sections(path)
    out = {}
    for name, body in sections.items():
        if name == "logic":
            keys = LOGIC_TECH_PARS
        elif name in MEM_TYPES:
            keys = MEM_TECH_PARS
        else:
            raise ValidationError(f"{path}: unknown section [{name}]")
        for key, raw in body.items():
            if key not in keys:
                raise ValidationError(f"{path}: [{name}] unknown parameter '{key}'")
            prefix = "logic" if name == "logic" else name
            out[f"{prefix}_{key}"] = _num(path, key, raw)
    return out


def _bounds(name: str, kind: ParamKind, seed: float) -> ParamBound:
    """Default optimization bounds span 0.1x-10x the seed value."""
    domain = ValueDomain.natural if _is_natural(name) else ValueDomain.real
    lo, hi = 0.1 * seed, 10.0 * seed
    if domain is ValueDomain.natural:
        lo = max(1.0, math.floor(lo))
        hi = max(lo, math.ceil(hi))
        seed = max(1.0, round(seed))
    return ParamBound(ParamId(name, kind, domain), lo, hi, seed)


def _is_natural(name: str) -> bool:
    base = name.split("_", 1)[-1]
    if base in _NATURAL_TECH or name in _NATURAL_TECH:
        return True
    if base in MEM_ARCH_PARS:
        return True
    comp_pars = {p for pars in COMP_ARCH_PARS.values() for p in pars}
    return name in comp_pars or name == "frequency"


def generate(arch_path, tech_path,
             mem_lib: DeviceMemLib | None = None,
             prim_lib: DevicePrimLib | None = None,
             templ_lib: AccelTemplateLib | None = None) -> HardwareModel:
    """Derive the full hardware model from config files; the result carries
    every parameter with seed values and default bounds."""
    spec = parse_arch(arch_path)
    tech = parse_tech(tech_path)
    mem_lib = mem_lib or default_mem_lib()
    prim_lib = prim_lib or default_prim_lib()
    templ_lib = templ_lib or default_template_lib()

    model = HardwareModel()
    for m in spec.mem_units:
        for q in MEM_METRICS:
            model.entries[(m, q)] = derive_memory_model(spec, mem_lib, m, q)
    for c in spec.comp_units:
        for q in COMP_METRICS:
            model.entries[(c, q)] = derive_compute_model(spec, prim_lib, templ_lib, c, q)
    model.entries[(SOC, Metric.frequency)] = Param("frequency")

    used = set()
    for e in model.entries.values():
        used |= e.params()
    for name, seed in sorted(tech.items()):
        model.param_table[name] = _bounds(name, ParamKind.tech, seed)
    for name, seed in sorted(spec.arch_params.items()):
        model.param_table[name] = _bounds(name, ParamKind.arch, seed)
    missing = sorted(used - set(model.param_table))
    if missing:
        raise ValidationError(f"model uses parameters without values: {missing}")
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Model file round-trip
# ---------------------------------------------------------------------------

def save_model(model: HardwareModel, path) -> None:
    from .expr import to_text
    from .hwmodel import _unit_key, _unit_name
    lines = ["# hwgrad hardware model"]
    for name, b in sorted(model.param_table.items()):
        lines.append(f"param {name} {b.param.kind.value} {b.param.domain.value} "
                     f"seed={b.seed!r} lo={b.lo!r} hi={b.hi!r}")
    for (unit, metric) in sorted(model.entries, key=lambda k: (_unit_key(k[0]), k[1].value)):
        lines.append(f"expr {_unit_name(unit)}.{metric.value} = "
                     f"{to_text(model.entries[(unit, metric)])}")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_model(path) -> HardwareModel:
    from .expr import parse as parse_expr
    model = HardwareModel()
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, rest = line.split(None, 1)
            if kind == "param":
                try:
                    name, pkind, domain, *kvs = rest.split()
                    kv = dict(s.split("=", 1) for s in kvs)
                    model.param_table[name] = ParamBound(
                        ParamId(name, ParamKind(pkind), ValueDomain(domain)),
                        float(kv["lo"]), float(kv["hi"]), float(kv["seed"]))
                except (ValueError, KeyError) as exc:
                    raise ParseError(str(path), lineno, f"bad param line: {exc}") from None
            elif kind == "expr":
                target, text = (s.strip() for s in rest.split("=", 1))
                unit_name, metric_name = target.split(".", 1)
                unit = _unit_from_name(unit_name, path, lineno)
                try:
                    metric = Metric(metric_name)
                except ValueError:
                    raise ParseError(str(path), lineno,
                                     f"unknown metric '{metric_name}'") from None
                model.entries[(unit, metric)] = parse_expr(text, source=str(path))
            else:
                raise ParseError(str(path), lineno, f"unknown directive '{kind}'")
    model.validate()
    return model


def _unit_from_name(name, path, lineno):
    if name in MemUnit.__members__:
        return MemUnit(name)
    if name in CompUnit.__members__:
        return CompUnit(name)
    if name == SOC:
        return SOC
    raise ParseError(str(path), lineno, f"unknown unit '{name}'")


def _atomic_write(path, text) -> None:
    import os
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)
