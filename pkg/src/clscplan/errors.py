"""Exception types shared across the planner, simulator and CLI."""


class ClscError(Exception):
    """Base class for all errors raised by clscplan."""


class ProblemValidationError(ClscError):
    def __init__(self, issues):
        self.issues = list(issues)
        lines = "\n".join(f"  - {i}" for i in self.issues)
        super().__init__(f"planning problem failed validation:\n{lines}")


class Infeasible(ClscError):
    """Supplies cannot be routed and no shortfall edges exist."""


class NegativeCycleUnbounded(ClscError):
    """A negative-cost cycle of unbounded capacity makes the objective unbounded."""


class NoPositiveRatio(ClscError):
    """No admissible plan earns positive profit, so the profit rate cannot be maximized."""


class DegenerateZeroTime(ClscError):
    """A plan earns positive profit at zero lead time; the profit rate is unbounded."""


class ConvergenceError(ClscError):
    pass


class ActionInfeasible(ClscError):
    pass


class InvariantBreach(ClscError):
    """An internal consistency check failed. Always a bug."""


class ParseError(ClscError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SchemaError(ClscError):
    def __init__(self, errors):
        # errors: list of (path, message)
        self.errors = list(errors)
        lines = "\n".join(f"  {p}: {m}" for p, m in self.errors)
        super().__init__(f"scenario schema errors:\n{lines}")
