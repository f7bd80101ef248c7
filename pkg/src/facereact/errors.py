"""Exception types shared across the package."""


class ValidationError(ValueError):
    """User-supplied data or configuration is invalid."""


class ProvenanceError(ValidationError):
    """Artifacts from different runs were combined (hash mismatch)."""
