"""Exception types shared across the package."""


class HardrankError(Exception):
    """Base class for all package-specific errors."""


class ParseError(HardrankError):
    """A malformed row in an interaction file."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyAfterFilter(HardrankError):
    """Filtering or splitting left an empty dataset or split."""


class SpecError(HardrankError):
    """Inconsistent synthetic dataset specification."""


class DegenerateCurve(HardrankError):
    """The gradient-magnitude curve has no interior maximum (a = 0)."""


class DegenerateSample(HardrankError):
    """A sample with zero variance cannot be density-estimated."""


class NoNegativeAvailable(HardrankError):
    """A user has interacted with every item; no negative can be drawn."""


class KTooLarge(HardrankError):
    """Requested more ranked items than are available after exclusion."""


class EmptyGroundTruth(HardrankError):
    """Ranking metrics are undefined for an empty ground-truth set."""


class ConfigError(HardrankError):
    """An experiment configuration key is unknown or has a bad value."""
