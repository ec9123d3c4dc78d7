"""Error taxonomy shared by all phasehom modules.

Three failure classes are distinguished so callers (and the CLI exit-code
logic) can react differently: bad user input, a numerical solver giving up,
and a feature that is deliberately out of scope.
"""


class PhasehomError(Exception):
    """Base class for all package-specific errors."""


class InputError(PhasehomError, ValueError):
    """Invalid argument or configuration value."""


class ConfigError(InputError):
    """Invalid experiment configuration; carries the offending field path."""

    def __init__(self, field_path, message):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class SolverError(PhasehomError, RuntimeError):
    """A linear or combinatorial solve failed to converge."""


class UnsupportedError(PhasehomError, NotImplementedError):
    """Requested feature is a documented non-goal."""


class InternalError(PhasehomError, RuntimeError):
    """Invariant violation that signals a bug, not bad input."""
