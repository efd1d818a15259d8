"""Exception taxonomy: metadata problems, alignment failures, backbones."""


class ExtractError(Exception):
    """Base class for everything raised on purpose by this package."""


class MetadataError(ExtractError):
    """Malformed or inconsistent input metadata / landmarks."""


class AlignmentError(ExtractError):
    """A single image could not be landmark-aligned (per-image, skippable)."""


class BackboneError(ExtractError):
    """Backbone construction or inference failed (aborts the run)."""
