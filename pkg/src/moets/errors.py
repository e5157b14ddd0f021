"""Exception hierarchy shared by every subsystem.

The CLI maps these onto exit codes: configuration problems exit 1, data and
contract problems exit 2, numeric divergence exits 3.
"""


class MoetsError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ConfigError(MoetsError, ValueError):
    exit_code = 1


class ContractError(MoetsError, ValueError):
    """A documented precondition of an operation was violated."""


class DimensionError(ContractError):
    pass


class DetachedTensorError(ContractError):
    pass


class DataError(MoetsError):
    pass


class ParseError(DataError, ValueError):
    pass


class FormatError(DataError, ValueError):
    pass


class CapacityError(DataError, ValueError):
    """A series or range is too short for the requested windows."""


class BoundsError(DataError, IndexError):
    pass


class NumericError(MoetsError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericError):
    def __init__(self, step: int, lr: float, loss: float):
        super().__init__(f"loss became {loss} at step {step} (lr={lr})")
        self.step = step
        self.lr = lr
        self.loss = loss


class CheckpointError(MoetsError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ChecksumMismatchError(CheckpointError):
    pass
