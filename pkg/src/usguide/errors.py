"""Exception types shared across the package."""


class UsguideError(Exception):
    """Base class for all package errors."""


class ShapeError(UsguideError):
    """Tensor/layer dimension mismatch."""


class StateError(UsguideError):
    """Operation called in an invalid order (e.g. backward before forward)."""


class InvalidLabelError(UsguideError):
    """Classification label outside {0, 1}."""


class InvalidHyperparameterError(UsguideError):
    """Bad training hyperparameter (e.g. lr <= 0)."""


class ConfigError(UsguideError):
    """Inconsistent model or phantom configuration."""


class InvalidStateError(UsguideError):
    """Probe state violates physical constraints (e.g. Fz < 0)."""


class InvalidPolicyError(UsguideError):
    """Demonstration policy parameters violate constraints."""


class BalancingError(UsguideError):
    """Target positive fraction unreachable within the generation budget."""


class SplitError(UsguideError):
    """Dataset cannot be stratified into the requested partitions."""


class EmptyDatasetError(UsguideError):
    """Operation requires a nonempty dataset."""


class FileFormatError(UsguideError):
    """Base class for serialized-artifact errors."""


class VersionError(FileFormatError):
    """File carries an unsupported format version."""


class TruncatedFileError(FileFormatError):
    """File ends before the declared payload."""


class ChecksumError(FileFormatError):
    """Payload checksum does not match the header."""


class TrainingDivergedError(UsguideError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class GuidanceInfeasibleError(UsguideError):
    """No sampled candidate satisfied the per-step bounds."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
