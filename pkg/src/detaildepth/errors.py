"""Exception types raised across the package."""


class DetailDepthError(Exception):
    """Base class for all package errors."""


class InvalidPixelError(DetailDepthError, IndexError):
    """A pixel lies outside the raster or is masked out."""


class EmptyInputError(DetailDepthError, ValueError):
    """An operation needs at least one valid pixel and got none."""


class DimensionMismatchError(DetailDepthError, ValueError):
    """Two grids that must share a shape do not."""


class OutOfRangeError(DetailDepthError, ValueError):
    """A value falls outside the representable range of a target encoding."""


class NotNormalizedError(DetailDepthError, ValueError):
    """A probability volume does not sum to one within tolerance."""


class DomainTooLargeError(DetailDepthError, ValueError):
    """The global solver refuses problems above its size guard."""


class FormatError(DetailDepthError, ValueError):
    """Malformed or truncated file. ``offset`` is the byte position, if known."""

    def __init__(self, message, path=None, offset=None):
        parts = []
        if path is not None:
            parts.append(str(path))
        if offset is not None:
            parts.append(f"byte {offset}")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.offset = offset
