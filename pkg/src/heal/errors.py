"""Exception types shared across the package."""


class HealError(Exception):
    """Base class for all errors raised by :mod:`heal`."""


class ShapeError(HealError, ValueError):
    """Operand shapes are not conformable."""


class ContractError(HealError, ValueError):
    """A documented precondition was violated."""


class IngestError(HealError, FileNotFoundError):
    """A required input file is missing or unreadable."""


class FormatError(HealError, ValueError):
    """An input file is malformed."""
