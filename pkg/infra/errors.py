"""Error types carrying a short code, a detail string and a process exit code."""


class SubshiftError(Exception):
    """Base failure with a short code and optional detail."""
    exit_code = 1

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}:{detail}")
        self.code = code
        self.detail = detail


class ConfigError(SubshiftError):
    """Invalid configuration: missing columns, bad specs, pruned-empty grids."""
    exit_code = 1


class DataError(SubshiftError):
    """Data contract violations: bad cells, empty pools or strata, degenerate classes."""
    exit_code = 2


class NumericError(SubshiftError):
    """Non-finite activations, gradients or weights; diverged fits."""
    exit_code = 3


class SweepError(SubshiftError):
    """One or more sweep runs failed."""
    exit_code = 4


def classify_exit(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, SubshiftError):
        return int(exc.exit_code)
    return 1


def with_coordinates(err: SubshiftError, **coords) -> SubshiftError:
    """Return a copy of err whose detail is prefixed with key=value coordinates."""
    prefix = " ".join(f"{k}={v}" for k, v in coords.items())
    detail = f"{prefix}: {err.detail}" if err.detail else prefix
    return type(err)(err.code, detail)
