"""Exception taxonomy shared by every module.

The CLI maps these onto its exit-code contract: usage problems exit 1,
data problems exit 2, numeric aborts exit 3.
"""


class FpamError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FpamError):
    """Tensor dimensions violate an operation's shape contract."""


class ContractError(FpamError):
    """An operation precondition or API contract was violated."""


class ConfigError(FpamError):
    """Invalid configuration value, preset name, or config-file key."""


class DataError(FpamError):
    """Malformed input data: WAV parsing, metadata ingestion, checkpoint loading."""


class NumericError(FpamError):
    """Non-finite values encountered where finite math was required."""
