"""
Exception hierarchy for recallaudit
Every error carries the exit code the CLI maps it to.
"""

from typing import Iterable, Optional


class RecallAuditError(Exception):
    """Base class for all recallaudit errors"""
    exit_code = 3


class UsageError(RecallAuditError):
    """Bad command line (unknown subcommand, missing arguments)"""
    exit_code = 1


class InvalidInputError(RecallAuditError, ValueError):
    """Arguments or data outside the domain of an operation"""
    exit_code = 2


class ValidationError(InvalidInputError):
    """A document or count bundle violates one or more identities"""

    def __init__(self, message: str, violations: Optional[Iterable[str]] = None):
        self.violations = list(violations or [])
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


class ConfigError(InvalidInputError):
    """Configuration file could not be loaded or validated"""


class ComputationError(RecallAuditError, ArithmeticError):
    """A numerical procedure has no defined result for its input"""
    exit_code = 3


class UnsampledStratumError(ComputationError):
    """A non-empty stratum has no annotations"""

    def __init__(self, stratum: int):
        self.stratum = stratum
        super().__init__(f"Stratum {stratum} is non-empty but has no annotated samples")


class DegenerateAllocationError(ComputationError):
    """Every stratum has zero standard deviation"""


class UndefinedTargetError(ComputationError):
    """A relative precision target is undefined at zero prevalence"""


class UndefinedRecallError(ComputationError):
    """Recall is 0/0"""


class PoolIOError(RecallAuditError, OSError):
    """Pool or report file could not be read or written"""
    exit_code = 4
