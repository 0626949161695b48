"""Exception hierarchy shared by every subpackage."""


class BenchError(Exception):
    """Base class for all errors raised by bayesbench."""


class ParameterError(BenchError, ValueError):
    """A distribution or model parameter lies outside its domain."""


class TransformError(BenchError, ValueError):
    """Unconstrained/constrained mapping received a malformed input."""


class ConfigError(BenchError):
    """Invalid model, chain or run configuration.

    ``problems`` holds every violation found, so callers can report all of
    them at once instead of the first.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class InitializationError(BenchError):
    """A sampler could not find a starting point with finite density."""


class InputError(BenchError, ValueError):
    """Malformed input to a diagnostic or rendering routine."""


class DegenerateVarianceError(InputError):
    """A diagnostic was asked to summarise a constant series."""


class SampleFormatError(BenchError, ValueError):
    """A samples file does not follow the JSONL wire format."""


class BackendFailure(BenchError):
    """An inference backend crashed, timed out, or produced invalid output."""

    def __init__(self, reason, detail=""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)
