"""Exception hierarchy shared by all conflat modules."""


class ConflatError(Exception):
    """Base class for every error raised by this package."""


# --- jet algebra ----------------------------------------------------------

class JetError(ConflatError):
    pass


class JetShapeError(JetError):
    """Operands disagree in variable count or truncation order."""


class JetIndexError(JetError):
    """Variable index or multi-index out of range."""


class JetOrderError(JetError):
    """Requested derivative degree exceeds the truncation order."""


class JetDomainError(JetError):
    """Elementary function evaluated outside its domain."""

    def __init__(self, func, value, message=None):
        self.func = func
        self.value = value
        super().__init__(
            message or f"{func}: constant term {value!r} outside domain")


# --- expression language --------------------------------------------------

class ParseError(ConflatError):
    """Syntax error with source position and expected-token hint."""

    def __init__(self, message, line, col, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        hint = f" (expected {', '.join(self.expected)})" if expected else ""
        super().__init__(f"{message} at line {line}, column {col}{hint}")


class SpecError(ConflatError):
    """Invalid immersion specification (counts, bindings, ambient checks)."""


# --- geometry -------------------------------------------------------------

class GeometryError(ConflatError):
    pass


class RankDeficientError(GeometryError):
    """The differential of the immersion drops rank at the point."""


class NonGenericError(GeometryError):
    """Principal curvatures are not pairwise distinct at the point."""

    def __init__(self, point, gap, message=None):
        self.point = tuple(point)
        self.gap = float(gap)
        super().__init__(
            message
            or f"non-generic point {self.point}: curvature gap {self.gap:.3e}")


class UmbilicPointError(NonGenericError):
    """All principal curvatures coincide; the conformal gauge degenerates."""

    def __init__(self, point, gap=0.0):
        super().__init__(point, gap,
                         f"umbilic point {tuple(point)}: invariants undefined")


class SingularMetricError(GeometryError):
    """Metric value matrix is not positive definite at the point."""


class NotConformallyFlatError(GeometryError):
    """A check that assumes conformal flatness was run on a non-flat input."""


class MoebiusFormNotClosedError(GeometryError):
    """A check that assumes a closed Moebius form found dC != 0."""


class InconsistentSignError(GeometryError):
    """Classifier saw mixed signs of Q across the sampled points."""


class FrameAlignmentError(GeometryError):
    """Principal frame could not be continued across a grid patch."""


class TransformDomainError(GeometryError):
    """Conformal transform is singular on the image of the sample box."""
