"""Hex meshing errors."""


class HexMeshError(Exception):
    """Base error for the hex meshing stages."""
    pass


class SegmentationError(HexMeshError):
    """Raised when surface patches cannot be matched one-to-one with polycube facets."""
    pass


class ParameterizationError(HexMeshError):
    """Raised when a patch cannot be mapped bijectively onto its facet rectangle."""
    pass


class PointLocationError(HexMeshError):
    """Raised when a lattice node falls outside every parametric triangle."""
    pass


class PillowError(HexMeshError):
    """Raised when no offset fraction yields a valid boundary layer."""
    pass
