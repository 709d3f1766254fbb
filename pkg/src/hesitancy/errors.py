"""Exception types shared across the package."""


class HesitancyError(Exception):
    """Base class for all package errors."""


class DataError(HesitancyError):
    """Malformed or inconsistent input data."""


class ParameterError(HesitancyError):
    """Invalid parameter value for an operation."""


class ImputationError(HesitancyError):
    """Missing values that cannot be resolved from neighbors."""

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        parts = "; ".join(",".join(c) for c in self.components)
        super().__init__(f"unresolvable imputation, no observed values in component(s): {parts}")


class StageError(HesitancyError):
    """Pipeline stage failure, tagged with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
