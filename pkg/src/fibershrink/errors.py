"""Exception hierarchy shared by all modules."""


class FiberShrinkError(Exception):
    """Base class for every error raised by this package."""


class JetError(FiberShrinkError, ValueError):
    pass


class OrderError(JetError):
    """A derivative beyond the stored jet order was requested."""


class SingularPointError(JetError, ZeroDivisionError):
    """Division by a jet whose value vanishes."""


class JetDomainError(JetError):
    """A univariate function was applied outside its domain."""


class GeometryError(FiberShrinkError):
    pass


class SingularMetricError(GeometryError):
    pass


class DegenerateRestrictionError(GeometryError):
    """The metric restricted to a subspace (e.g. the fibers) is degenerate."""


class NotASubmersionError(GeometryError):
    """The projection map drops rank."""


class ParityError(FiberShrinkError, ValueError):
    """Pfaffian of an odd-sized matrix."""


class UnsupportedSignatureError(FiberShrinkError):
    """Euler forms are only defined here for Riemannian signature."""


class QuadratureNodeError(FiberShrinkError):
    pass


class FitError(FiberShrinkError, ValueError):
    pass


class CatalogError(FiberShrinkError, KeyError):
    pass


class ExampleConstructionError(FiberShrinkError, ValueError):
    """A catalog example was requested with invalid parameters."""
