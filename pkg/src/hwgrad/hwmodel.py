"""Hardware model: (unit, metric) -> expression, and its specialization
to a concrete model of real values once parameters are assigned.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import MissingMetric, OutOfBounds, UnboundParameter, ValidationError
from .expr import Expr

__all__ = [
    "MemUnit", "CompUnit", "SOC", "Metric", "MEM_METRICS", "COMP_METRICS",
    "ParamKind", "ValueDomain", "ParamId", "ParamBound",
    "HardwareModel", "ConcreteHardwareModel",
]


class MemUnit(str, enum.Enum):
    localMem = "localMem"
    globalBuf = "globalBuf"
    mainMem = "mainMem"


class CompUnit(str, enum.Enum):
    systolicArray = "systolicArray"
    vector = "vector"
    macTree = "macTree"
    fpu = "fpu"


# Chip-level pseudo-unit carrying the clock frequency.
SOC = "SoC"


class Metric(str, enum.Enum):
    # memory metrics
    readLatency = "readLatency"      # s/access
    writeLatency = "writeLatency"    # s/access
    readEnergy = "readEnergy"        # nJ/access
    writeEnergy = "writeEnergy"      # nJ/access
    capacity = "capacity"            # bytes
    bandwidth = "bandwidth"          # bytes/cycle
    # compute metrics
    intEnergy = "intEnergy"          # nJ/op
    latency = "latency"              # s/op
    throughput = "throughput"        # ops/cycle
    # shared
    leakagePower = "leakagePower"    # mW
    area = "area"                    # mm^2
    # SoC
    frequency = "frequency"          # Hz


MEM_METRICS = (
    Metric.readLatency, Metric.writeLatency, Metric.readEnergy,
    Metric.writeEnergy, Metric.leakagePower, Metric.area,
    Metric.capacity, Metric.bandwidth,
)

COMP_METRICS = (
    Metric.intEnergy, Metric.leakagePower, Metric.latency,
    Metric.area, Metric.throughput,
)


class ParamKind(str, enum.Enum):
    tech = "tech"
    arch = "arch"


class ValueDomain(str, enum.Enum):
    real = "real"
    natural = "natural"


@dataclass(frozen=True)
class ParamId:
    name: str
    kind: ParamKind
    domain: ValueDomain


@dataclass(frozen=True)
class ParamBound:
    param: ParamId
    lo: float
    hi: float
    seed: float

    def clamp(self, v: float) -> float:
        v = min(max(v, self.lo), self.hi)
        if self.param.domain is ValueDomain.natural:
            v = max(1.0, float(round(v)))
            v = min(max(v, math.ceil(self.lo)), math.floor(self.hi))
            v = max(v, 1.0)
        return v


@dataclass
class HardwareModel:
    """Map from (unit, metric) to a parameter-dependent expression.

    `entries` keys are (unit, Metric) where unit is a MemUnit, CompUnit or
    the SOC marker.  `param_table` carries every parameter any expression
    refers to, with its optimization bounds and seed value.
    """

    entries: dict = field(default_factory=dict)
    param_table: dict = field(default_factory=dict)  # name -> ParamBound

    def validate(self) -> None:
        missing = []
        for (unit, metric), e in self.entries.items():
            for p in e.params():
                if p not in self.param_table:
                    missing.append(f"({unit}, {metric.value}) uses unknown param '{p}'")
        if missing:
            raise ValidationError("; ".join(missing))

    def units(self):
        return sorted({u for (u, _) in self.entries}, key=_unit_key)

    def mem_units(self):
        return [u for u in self.units() if isinstance(u, MemUnit)]

    def comp_units(self):
        return [u for u in self.units() if isinstance(u, CompUnit)]

    def expr(self, unit, metric: Metric) -> Expr:
        try:
            return self.entries[(unit, metric)]
        except KeyError:
            raise MissingMetric(_unit_name(unit), metric.value) from None

    def seed_assignment(self) -> dict:
        return {name: b.seed for name, b in self.param_table.items()}

    def specialize(self, tech: dict, arch: dict) -> "ConcreteHardwareModel":
        env = dict(tech)
        env.update(arch)
        for name, bound in self.param_table.items():
            if name not in env:
                raise UnboundParameter(name)
            v = env[name]
            if not (bound.lo <= v <= bound.hi):
                raise OutOfBounds(name, v, bound.lo, bound.hi)
        values = {}
        for key, e in self.entries.items():
            values[key] = e.eval(env)
        return ConcreteHardwareModel(values=values, model=self,
                                     tech=dict(tech), arch=dict(arch))


@dataclass
class ConcreteHardwareModel:
    """All metrics resolved to reals; provenance retained for the
    backward pass."""

    values: dict
    model: HardwareModel | None = None
    tech: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)

    def lookup(self, unit, metric: Metric) -> float:
        try:
            return self.values[(unit, metric)]
        except KeyError:
            raise MissingMetric(_unit_name(unit), metric.value) from None

    def units(self):
        return sorted({u for (u, _) in self.values}, key=_unit_key)

    def mem_units(self):
        return [u for u in self.units() if isinstance(u, MemUnit)]

    def comp_units(self):
        return [u for u in self.units() if isinstance(u, CompUnit)]

    def frequency(self) -> float:
        return self.lookup(SOC, Metric.frequency)

    def assignment(self) -> dict:
        env = dict(self.tech)
        env.update(self.arch)
        return env

    def report(self) -> str:
        """Line-oriented dump: `unit.metric = value # units`."""
        units_of = {
            Metric.readLatency: "s/access", Metric.writeLatency: "s/access",
            Metric.readEnergy: "nJ/access", Metric.writeEnergy: "nJ/access",
            Metric.leakagePower: "mW", Metric.area: "mm^2",
            Metric.capacity: "bytes", Metric.bandwidth: "bytes/cycle",
            Metric.intEnergy: "nJ/op", Metric.latency: "s/op",
            Metric.throughput: "ops/cycle", Metric.frequency: "Hz",
        }
        lines = []
        for (unit, metric) in sorted(self.values, key=lambda k: (_unit_key(k[0]), k[1].value)):
            v = self.values[(unit, metric)]
            lines.append(f"{_unit_name(unit)}.{metric.value} = {v:.9g} # {units_of[metric]}")
        return "\n".join(lines) + "\n"


_MEM_ORDER = {MemUnit.localMem: 0, MemUnit.globalBuf: 1, MemUnit.mainMem: 2}
_COMP_ORDER = {CompUnit.systolicArray: 0, CompUnit.vector: 1,
               CompUnit.macTree: 2, CompUnit.fpu: 3}


def _unit_key(u):
    if isinstance(u, MemUnit):
        return (0, _MEM_ORDER[u])
    if isinstance(u, CompUnit):
        return (1, _COMP_ORDER[u])
    return (2, 0)


def _unit_name(u):
    return u.value if isinstance(u, (MemUnit, CompUnit)) else str(u)
