"""Exception hierarchy shared across the toolkit."""


class JetgenError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(JetgenError):
    """Operands have incompatible dimensions, orders, or base points."""


class InsufficientOrderError(JetgenError):
    """A jet of higher truncation order is required for this operation."""


class SingularJetError(JetgenError):
    """The linear part of a jet is singular where invertibility is required."""


class DslSyntaxError(JetgenError):
    """Source text rejected by the map grammar.  Carries line/column."""

    def __init__(self, message, line, col):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class DomainError(JetgenError):
    """Evaluation point lies outside the program's open domain."""


class EvaluationError(JetgenError):
    """Runtime singularity at the evaluation point (1/0, log(x<=0), ...)."""


class NotInGLError(JetgenError):
    """Square matrix fails the invertibility gate."""


class IndeterminateRankError(JetgenError):
    """A rank decision fell inside the ambiguity band around the threshold."""


class UnsupportedStratumError(JetgenError):
    """Requested check is only implemented for corank-1 strata."""


class FiberError(JetgenError):
    """Points handed to a multigerm check do not share a target value."""


class InvalidSpecError(JetgenError):
    """A construction spec violates its invariants (e.g. zero matrix entry)."""


class ConfigError(JetgenError):
    """Experiment configuration is malformed or inconsistent."""


class ReportSchemaError(JetgenError):
    """A report file does not match the expected schema/version."""
