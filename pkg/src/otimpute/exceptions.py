"""Exception types shared across the package."""


class OtImputeError(Exception):
    """Base class for all errors raised by this package."""


class ColumnAllMissing(OtImputeError):
    """A column has no observed entry, so per-column statistics are undefined."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has no observed entries")


class MaskedValueError(OtImputeError):
    """A value at a masked-out position was read before initialization."""


class BatchTooLarge(OtImputeError):
    """Requested batch size exceeds the number of rows."""


class FallbackToUniform(OtImputeError):
    """Stratified batch sampling is infeasible; caller should sample uniformly."""


class InvalidRate(OtImputeError):
    """Missingness rate outside the valid range."""


class CalibrationFailure(OtImputeError):
    """Intercept calibration for a logistic masking model did not converge."""


class InfeasibleRate(OtImputeError):
    """Requested missing rate cannot be reached by the quantile mechanism."""

    def __init__(self, p, q):
        super().__init__(
            f"target rate {p} needs Bernoulli rate {p / (2 * q):.3f} > 1 on the "
            f"quantile tails; raise q (currently {q}) or lower the rate"
        )


class MaskGenerationError(OtImputeError):
    """A mask could not be repaired to keep every row/column partially observed."""


class InvalidCost(OtImputeError):
    """Cost matrix contains NaN or infinite entries."""


class InvalidWeights(OtImputeError):
    """Measure weights are not on the probability simplex."""


class SizeMismatch(OtImputeError):
    """Point sets must have equal cardinality for exact matching."""


class TooLarge(OtImputeError):
    """Input exceeds the configured size cap for exact assignment."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(
            f"{size} points exceed the exact-W2 cap of {cap}; subsample the rows "
            f"or raise the cap"
        )


class NoMissingEntries(OtImputeError):
    """Imputation metrics are undefined when nothing is missing."""


class LossDiverged(OtImputeError):
    """Training loss became NaN/inf; carries diagnostics for the failed run."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class RegistryMismatch(OtImputeError):
    """Loaded dataset shape differs from the registry entry."""

    def __init__(self, name, expected, found):
        self.name = name
        self.expected = expected
        self.found = found
        super().__init__(
            f"dataset {name!r}: registry expects shape {expected}, file has {found}"
        )


class ConfigError(OtImputeError):
    """Experiment configuration failed validation."""
