"""Exception hierarchy shared by every perturbkit module.

All domain errors derive from PerturbKitError so the CLI can map them to a
single non-zero exit code while usage errors stay with argparse.
"""


class PerturbKitError(Exception):
    """Base class for all perturbkit domain errors."""


class InvalidInputError(PerturbKitError):
    """An argument violates an operation's precondition."""


class PayloadNotFoundError(PerturbKitError, KeyError):
    """A payload_id does not resolve in the payload library."""


class ConfigurationError(PerturbKitError):
    """A configuration object or corpus is inadmissible."""


class ValidationError(ConfigurationError):
    """A config failed validation; carries the individual violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class CalibrationError(PerturbKitError):
    """Severity-to-parameter calibration failed to converge."""


class DegenerateInputError(PerturbKitError):
    """An input is degenerate for the requested metric (e.g. all-black frame)."""


class LoadError(PerturbKitError):
    """A manifest, dataset, or log file could not be loaded."""


class EmptySelectionError(PerturbKitError):
    """A filter selected zero records where at least one is required."""


class InvariantViolationError(PerturbKitError):
    """Internal data violates a structural invariant (e.g. span out of bounds)."""
