"""Exception types shared across the package."""


class GraphStructureError(ValueError):
    """Structurally invalid graph input: out-of-range index, missing node, broken view."""


class ValidationError(ValueError):
    """Value-level violation: non-binary feature, dimension mismatch, bad checkpoint."""


class ConfigurationError(ValueError):
    """Unsatisfiable or inconsistent run configuration."""


class DatasetParseError(ValueError):
    """Malformed dataset file. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
