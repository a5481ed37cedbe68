"""Exception hierarchy shared by every module."""


class MogroError(Exception):
    """Base class for all package errors."""


class InvalidInput(MogroError, ValueError):
    pass


class ContractViolation(MogroError, ValueError):
    """A documented precondition does not hold (e.g. a non-symmetric matrix)."""


class InconsistentSystem(MogroError, ValueError):
    pass


class InvalidConfig(MogroError, ValueError):
    pass


class SchemaError(MogroError, ValueError):
    pass


class ParseError(MogroError, ValueError):
    pass


class RankError(MogroError, ValueError):
    pass
