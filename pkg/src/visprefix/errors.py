"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with an operation."""


class ConfigError(ValueError):
    """A configuration is inconsistent or cannot be realised."""


class UsageError(RuntimeError):
    """An API was called out of its contract (wrong layer index, non-scalar backward, ...)."""


class InputError(ValueError):
    """Data values are out of range (token id, tag index, relation label)."""


class FormatError(ValueError):
    """A binary file is corrupt, truncated, or carries the wrong magic/version."""


class DivergenceError(FloatingPointError):
    """Training produced a non-finite value; ``step`` is the optimizer step it happened at."""

    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"non-finite value at training step {step}: {detail}")
        self.step = step
