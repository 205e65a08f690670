"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ArithmeticError):
    """A NaN or infinity showed up where a finite value is required."""


class ContractError(ValueError):
    """A precondition of a public function was violated."""


class ContextError(ContractError):
    """A set-valued input (train or test rows) was empty."""


class LabelFormatError(ContractError):
    """Class labels were not one-hot rows."""


class CapacityError(RuntimeError):
    """The memory bank is full and configured to reject appends."""


class EmptyBankError(LookupError):
    """Sampling was requested from a bank holding no snapshots."""


class FormatError(ValueError):
    """A persisted file is malformed, truncated or of the wrong version."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InfeasibleError(ValueError):
    """A requested bound level cannot be reached with the available residuals."""
