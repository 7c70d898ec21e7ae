"""Exception types shared across the package."""


class FlowfitError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(FlowfitError):
    """An operation received matrices with non-conforming shapes."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class DomainError(FlowfitError):
    """An operation was evaluated outside its mathematical domain."""

    def __init__(self, op, message):
        self.op = op
        super().__init__(f"{op}: {message}")


class CapabilityError(FlowfitError):
    """A layer or model was asked for a direction it does not support."""


class ConfigError(FlowfitError):
    """A run configuration failed validation; carries the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class TrainingError(FlowfitError):
    """Training aborted (non-finite loss or gradient)."""


class CheckpointError(FlowfitError):
    """A checkpoint file is missing fields, malformed, or inconsistent."""
