"""Exception types; the CLI maps them to exit codes."""


class MbrlError(Exception):
    pass


class DimensionError(MbrlError, ValueError):
    """Array shapes disagree along a named axis."""

    def __init__(self, axis, expected, got):
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch on axis {axis!r}: expected {expected}, got {got}")


class InvariantError(MbrlError, ValueError):
    """An input or generated object violates a structural invariant."""


class ConfigError(MbrlError, ValueError):
    """An experiment configuration failed validation."""
