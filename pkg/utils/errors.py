"""
Exception hierarchy for cfrag.
Every error raised by the library derives from CfragError so the CLI can
report it in one place.
"""

from typing import Iterable, Optional


class CfragError(Exception):
    """Base class for all library errors."""


class DimensionError(CfragError):
    """Operand shapes do not conform for an operation."""


class NumericError(CfragError):
    """A computation produced NaN or Inf, or divided by a zero norm."""


class ContractError(CfragError):
    """A documented precondition was violated by the caller."""


class ConfigError(CfragError):
    """Invalid configuration value or unknown task/key."""


class ParseError(CfragError):
    """A dataset record could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IntegrityError(CfragError):
    """Dataset records reference each other inconsistently."""


class FormatError(CfragError):
    """A binary file has the wrong magic, version, or dimension."""


class UserLookupError(CfragError):
    """A user id is not present in an index."""


class TransportError(CfragError):
    """A remote call failed after exhausting its retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class FeedbackError(CfragError):
    """One or more candidate generations failed hard."""

    def __init__(self, sample_id: str, failed_ids: Iterable[str]):
        self.sample_id = sample_id
        self.failed_ids = list(failed_ids)
        super().__init__(
            f"feedback failed for sample {sample_id}: candidates {', '.join(self.failed_ids)}"
        )


class TrainingError(CfragError):
    """A training stage aborted."""

    def __init__(self, stage: str, step: int, message: str, sample_id: Optional[str] = None):
        location = f"stage '{stage}' step {step}"
        if sample_id is not None:
            location += f" (sample {sample_id})"
        super().__init__(f"{location}: {message}")
        self.stage = stage
        self.step = step
        self.sample_id = sample_id


class CheckpointError(CfragError):
    """A checkpoint is missing or incompatible with the configuration."""
