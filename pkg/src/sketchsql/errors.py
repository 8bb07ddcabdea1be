"""Exception types shared across the package."""


class SketchSqlError(Exception):
    """Base class for all package errors."""


class TableParseError(SketchSqlError):
    """Malformed table or example file; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class TableValidationError(SketchSqlError):
    """A table violates a structural invariant (row length, cell type)."""


class BoundsError(SketchSqlError, IndexError):
    """Index outside the valid range for a table dimension."""


class QueryTypeError(SketchSqlError):
    """An operator or aggregation applied to an incompatible column type."""


class ContractViolation(SketchSqlError):
    """A caller broke a documented precondition."""


class ShapeError(SketchSqlError):
    """Tensor operands with incompatible shapes."""

    def __init__(self, op, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class NumericError(SketchSqlError):
    """A forward op produced a non-finite value."""


class ConfigError(SketchSqlError):
    """Invalid generation or training configuration."""


class InapplicablePerturbation(SketchSqlError):
    """The drawn perturbation category cannot apply to the chosen value."""


class CheckpointError(SketchSqlError):
    """Corrupt or incompatible model checkpoint file."""
