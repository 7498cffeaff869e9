"""Exception hierarchy.

Three broad buckets map onto the CLI exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4. Specific exceptions subclass the
bucket they belong to so callers can catch either level.
"""


class ProgTransferError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ProgTransferError):
    """Invalid configuration, arguments, or incompatible inputs."""


class DataError(ProgTransferError):
    """Problems with input data: missing files, parse failures, bad splits."""


class NumericError(ProgTransferError):
    """Non-finite values or other numeric breakdowns during computation."""


class InvalidArchitectureError(ConfigError):
    """Network layer dimensions are missing or degenerate."""


class ShapeError(ProgTransferError):
    """Array shapes do not match the expected wiring."""


class LabelError(ProgTransferError):
    """A class label index is out of range."""


class WiringError(ConfigError):
    """Progressive-network columns have incompatible depth or width."""


class ParseError(DataError):
    """A CSV row could not be parsed; message names row and column."""


class EmptyInputError(DataError):
    """An operation received an empty dataset or log collection."""


class DegenerateSplitError(DataError):
    """A training split is missing at least one task class."""


class IncompatibleDomainError(DataError):
    """Source and target datasets have different feature dimensions."""


class InvalidFoldError(ConfigError):
    """Fold count or fold subset request is out of range."""


class PairingError(ConfigError):
    """Two CV results were not produced from identical fold plans."""


class EmptyEvaluationError(ProgTransferError):
    """A confusion matrix contains no true instances at all."""
