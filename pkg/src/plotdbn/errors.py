"""Exception hierarchy shared across the package."""


class PlotDbnError(Exception):
    """Base class for all package errors."""


class ModelLoadError(PlotDbnError):
    """A document could not be parsed into model structures.

    Distinct from validation: load errors mean the input is unreadable or
    malformed (bad JSON, unknown fields, wrong types), not that a readable
    model violates a structural rule.
    """


class ModelValidationError(PlotDbnError):
    """A loaded model violates structural invariants."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


class ConfigurationError(PlotDbnError):
    """A parameter set is internally inconsistent (missing jump entry, bad window, ...)."""


class DimensionMismatchError(PlotDbnError):
    """An array or prior does not match the model's state-space shape."""


class InvalidRecordError(PlotDbnError):
    """An observation or incident record does not fit the model's alphabets."""


class InconsistentEvidenceError(PlotDbnError):
    """Observed evidence has probability zero under the model."""


class StateSpaceCapError(PlotDbnError):
    """The exact joint state space exceeds the configured cell cap."""


class UnknownVertexError(PlotDbnError):
    """A record or request references a vertex the model does not define."""


class NonAncestralDataError(PlotDbnError):
    """One or more incidents fail the ancestrality requirement."""

    def __init__(self, offenders):
        self.offenders = list(offenders)
        detail = "; ".join(str(o) for o in self.offenders)
        super().__init__(f"non-ancestral incidents rejected: {detail}")


class SecureTableError(PlotDbnError):
    """An operation would touch a secure table in a context that forbids it."""


class LibraryError(PlotDbnError):
    """Library-level failure: duplicate ids, colliding names, missing entries."""
