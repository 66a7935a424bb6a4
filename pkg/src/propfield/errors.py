"""Exception hierarchy shared across the pipeline."""


class PropfieldError(Exception):
    """Base class for all errors raised by this package."""


class BundleLoadError(PropfieldError):
    """A referenced file is missing or unreadable."""


class BundleStructureError(PropfieldError):
    """Loaded data has inconsistent shapes or a malformed layout."""


class BundleValidationError(PropfieldError):
    """Data loaded fine but violates a bundle invariant (e.g. bad rotation)."""


class ConfigError(PropfieldError):
    """Run configuration is incomplete or inconsistent; raised before any compute."""


class MaterialError(PropfieldError):
    """Material dictionary is malformed or lacks a required property."""


class DegenerateGeometryError(PropfieldError):
    """Input geometry does not constrain the requested fit (e.g. collinear centers)."""


class StageError(PropfieldError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
