"""Exception hierarchy shared by all modules."""


class HmmError(Exception):
    """Base class; ``code`` is the machine-readable name printed by the CLI."""

    code = "HmmError"

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        cls.code = cls.__name__


class InvalidBox(HmmError, ValueError):
    pass


class InvalidSubdivision(HmmError, ValueError):
    pass


class NonAlignedInterface(HmmError, ValueError):
    pass


class NonMatchingPeriodicBoundary(HmmError, ValueError):
    pass


class IndexOutOfRange(HmmError, IndexError):
    pass


class DimensionMismatch(HmmError, ValueError):
    pass


class SingularMatrix(HmmError, ArithmeticError):
    pass


class MissingRegionCoefficient(HmmError, KeyError):
    pass


class PointOutsideMesh(HmmError, ValueError):
    pass


class DomainMismatch(HmmError, ValueError):
    pass


class NotASquareInclusion(HmmError, ValueError):
    pass


class UnresolvedInclusions(HmmError, ValueError):
    pass


class NonPositiveError(HmmError, ValueError):
    pass


class NonMonotoneMesh(HmmError, ValueError):
    pass


class ConfigError(HmmError, ValueError):
    pass
