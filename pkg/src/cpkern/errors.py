"""Exception types shared across the package."""


class CpkernError(Exception):
    """Base class for every package-specific error."""


class ShapeError(CpkernError, ValueError):
    """Dimensions, extents, or volumes that do not fit together."""


class IndexRangeError(CpkernError, IndexError):
    """Multi-index or linear index outside its valid range."""


class ParameterError(CpkernError, ValueError):
    """Invalid configuration, plan, or argument value."""


class ResourceError(CpkernError, RuntimeError):
    """A memory or scratch budget would be exceeded."""


class FormatError(CpkernError, ValueError):
    """Malformed tensor, model, or machine-spec file."""
