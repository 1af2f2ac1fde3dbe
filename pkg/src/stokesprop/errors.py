"""Exception hierarchy.

Validation problems (bad input, bad mesh, bad config) derive from
``ValidationError``; numerical failures derive from ``NumericalError``.
The CLI maps the two families to exit codes 2 and 3.
"""


class StokespropError(Exception):
    pass


class ValidationError(StokespropError, ValueError):
    pass


class NumericalError(StokespropError, ArithmeticError):
    pass


class MalformedMeshError(ValidationError):
    """STL bytes could not be parsed; ``offset`` is the byte position."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TopologyError(ValidationError):
    """Surface is not a closed, consistently orientable 2-manifold."""

    def __init__(self, message, edges=()):
        self.edges = [tuple(int(v) for v in e) for e in edges]
        if self.edges:
            shown = ", ".join(f"({a},{b})" for a, b in self.edges[:20])
            more = "" if len(self.edges) <= 20 else f" ... [{len(self.edges)} total]"
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class DegenerateMeshError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class BemSolveError(NumericalError):
    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (1-norm condition estimate {condition:.3e})"
        super().__init__(message)


class ResistanceDefectError(NumericalError):
    """A computed resistance set violates a structural invariant."""

    def __init__(self, message, defect=None):
        self.defect = defect
        super().__init__(message)


class DegenerateResistanceError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class NoPropulsionError(NumericalError):
    pass


class IllConditionedWarning(RuntimeWarning):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass
