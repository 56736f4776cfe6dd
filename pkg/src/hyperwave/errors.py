"""Exception types shared across the package."""


class HyperwaveError(Exception):
    """Base class for all package errors."""


class NumericalError(HyperwaveError):
    """A solver left its domain of validity (CLI exit code 3)."""


class NotTimelike(NumericalError):
    """A vector that should lie inside the future light cone does not."""


class DegenerateFrame(NumericalError):
    pass


class StabilityViolation(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Heat flow hit ``max_levels`` before the stopping criterion.

    The partial ladder is attached as ``ladder`` so callers can inspect it.
    """

    def __init__(self, message, ladder=None):
        super().__init__(message)
        self.ladder = ladder


class TailTooLarge(NumericalError):
    pass


class SupportTooLarge(HyperwaveError):
    pass


class ShapeMismatch(HyperwaveError):
    pass


class GridMismatch(HyperwaveError):
    pass


class NotOrthogonal(HyperwaveError):
    pass


class ConeOutsideBox(HyperwaveError):
    pass


class SingularField(HyperwaveError):
    pass


class SnapshotFormatError(HyperwaveError):
    pass


class ConfigError(HyperwaveError):
    """A configuration value failed validation (CLI exit code 2).

    ``key`` is the dotted path of the offending entry, e.g. ``wave.cfl``.
    """

    def __init__(self, message, key=""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class ParseError(ConfigError):
    """The configuration file is not valid TOML."""
