"""Exception types shared across the package."""


class HypergrlError(Exception):
    """Base class for all package-specific errors."""


class ParseError(HypergrlError, ValueError):
    """A text input file could not be parsed; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ValidationError(HypergrlError, ValueError):
    """Structurally well-formed input violated a semantic constraint."""


class ShapeError(HypergrlError, ValueError):
    """Operands or files have incompatible dimensions."""


class ConfigError(HypergrlError, ValueError):
    """Bad configuration: unknown key, out-of-range value, or missing input."""


class TrainingDiverged(HypergrlError, RuntimeError):
    """A non-finite loss was produced; carries the epoch and loss breakdown."""

    def __init__(self, epoch, breakdown, message=""):
        self.epoch = epoch
        self.breakdown = breakdown
        detail = message or f"non-finite loss at epoch {epoch}: {breakdown}"
        super().__init__(detail)
