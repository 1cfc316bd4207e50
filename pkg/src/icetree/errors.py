"""Exception types shared across the package."""


class IceError(Exception):
    """Base class for all icetree errors."""


class InputError(IceError, ValueError):
    """Bad user input: malformed files, misaligned arrays, invalid parameters."""


class ContractError(IceError, RuntimeError):
    """An internal invariant was violated (corrupted state, unfinalized tree)."""
