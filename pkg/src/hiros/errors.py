"""Exception hierarchy shared across the package."""


class HirosError(Exception):
    """Base class for everything raised deliberately by this package."""


class DimensionError(HirosError):
    """Shapes of tensor operands do not line up; message names the axes."""


class ConfigError(HirosError):
    """A configuration would produce an invalid network or dataset."""


class InputError(HirosError):
    """Caller passed data that violates an operation's preconditions."""


class FormatError(HirosError):
    """A binary payload is malformed. ``offset`` points at the bad byte."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StateError(HirosError):
    """Operation invoked in a state that cannot serve it."""


class BusyError(StateError):
    """Robot received an action while a motion is still executing."""


class ProtocolError(HirosError):
    """A prediction or command outside the known vocabulary."""
