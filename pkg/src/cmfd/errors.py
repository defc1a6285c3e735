"""Exception types shared across the package."""


class CmfdError(Exception):
    """Base class for all errors raised by cmfd."""


class InvalidInputError(CmfdError, ValueError):
    """An argument violates an operation's precondition."""


class DecodeError(CmfdError, OSError):
    """An image file could not be read or decoded."""
