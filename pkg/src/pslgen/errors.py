"""Exception types shared across the package."""


class PslgenError(Exception):
    """Base class for all package-specific errors."""


class DegenerateQuad(PslgenError):
    """Quadrilateral is collinear, self-intersecting, or has (near-)zero area."""


class SingularSystem(PslgenError):
    """Linear system for a homography is rank deficient."""


class PointAtInfinity(PslgenError):
    """Projective division underflowed (point maps to infinity)."""


class EmptyMask(PslgenError):
    """Operation requires at least one foreground pixel."""


class ConstantInput(PslgenError):
    """Value buffer has no spread; no separating threshold exists."""


class ShapeMismatch(PslgenError):
    """Raster operands do not share a resolution."""


class EmptyInput(PslgenError):
    """Operation requires a nonempty sample set."""


class MalformedLine(PslgenError):
    """Annotation line does not parse; carries file and line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class MissingImage(PslgenError):
    """Annotation file present but its image file is not."""
