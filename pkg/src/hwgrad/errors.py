"""Exception hierarchy shared across the toolchain.

The CLI maps these onto exit codes: usage problems exit 1, input
validation problems exit 2.
"""


class ToolError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ToolError):
    def __init__(self, source, line, reason):
        self.source = source
        self.line = line
        self.reason = reason
        super().__init__(f"{source}:{line}: {reason}")


class ValidationError(ToolError):
    pass


class UnboundParameter(ToolError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"parameter '{name}' has no assigned value")


class OutOfBounds(ToolError):
    def __init__(self, name, value, lo, hi):
        self.name = name
        self.value = value
        self.bounds = (lo, hi)
        super().__init__(f"parameter '{name}' = {value} outside bounds [{lo}, {hi}]")


class MissingMetric(ToolError):
    def __init__(self, unit, metric):
        self.unit = unit
        self.metric = metric
        super().__init__(f"no value for ({unit}, {metric})")


class UnsupportedMemType(ToolError):
    pass


class UnsupportedTemplate(ToolError):
    pass


class CycleDetected(ValidationError):
    pass


class Unsplittable(ToolError):
    pass


class InfeasibleVertex(ToolError):
    pass


class GridTooLarge(ToolError):
    pass
