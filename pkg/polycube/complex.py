"""Polycube complex: lattice cuboids, their boundary facets and vertex assignments."""

import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from geometry.mesh import AXIS_FACE_CORNERS, TriMesh, mesh_genus, quads_to_trimesh, voxel_boundary_quads
from geometry.normalization import NormalizationTransform

logger = logging.getLogger(__name__)


class PolycubeError(Exception):
    """Base error for polycube extraction."""
    pass


class ClassificationError(PolycubeError):
    """Raised when vertex normals cannot be matched to axis-aligned facets."""
    pass


class VoxelBoundaryError(PolycubeError):
    """Raised when the occupied cells do not bound a closed manifold."""
    pass


class SmoothingError(PolycubeError):
    """Raised when smoothing meets a surface with no enclosed volume."""
    pass


def tangent_axes(axis: int) -> tuple[int, int]:
    """The two axes spanning a facet with the given normal axis, ascending."""
    return tuple(a for a in range(3) if a != axis)


@dataclass(frozen=True)
class Facet:
    """Axis-aligned boundary rectangle in lattice coordinates.

    ``lo``/``hi`` are full 3D lattice corners with lo[axis] == hi[axis] ==
    plane. (u, v) on the facet run along tangent_axes(axis).
    """
    index: int
    axis: int
    sign: int
    lo: tuple[int, int, int]
    hi: tuple[int, int, int]
    cuboid: int

    @property
    def plane(self) -> int:
        return self.lo[self.axis]

    @property
    def tangents(self) -> tuple[int, int]:
        return tangent_axes(self.axis)

    @property
    def orientation(self) -> int:
        """Sign of the (u, v) area of an outward-oriented triangle on this facet."""
        parity = -1 if self.axis == 1 else 1
        return self.sign * parity

    def uv_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.tangents
        return (np.array([self.lo[a], self.lo[b]], dtype=np.float64),
                np.array([self.hi[a], self.hi[b]], dtype=np.float64))

    def uv_corners(self) -> np.ndarray:
        """Rectangle corners counter-clockwise in (u, v) starting at (lo, lo)."""
        (u0, v0), (u1, v1) = self.uv_bounds()
        return np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]])

    def lattice_point(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        out = np.empty((len(uv), 3))
        a, b = self.tangents
        out[:, self.axis] = self.plane
        out[:, a] = uv[:, 0]
        out[:, b] = uv[:, 1]
        return out

    def to_dict(self) -> dict:
        return {"index": self.index, "axis": self.axis, "sign": self.sign,
                "lo": list(self.lo), "hi": list(self.hi), "cuboid": self.cuboid}


@dataclass(frozen=True)
class PolycubeComplex:
    """Union of integer-cornered cuboids scaled by h and offset by origin.

    Attributes:
        h: lattice unit length
        origin: position of lattice point (0, 0, 0)
        cuboids: (K, 2, 3) integer min/max corners
    """
    h: float
    origin: np.ndarray
    cuboids: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        cuboids = np.asarray(self.cuboids, dtype=np.int64).reshape(-1, 2, 3)
        if not self.h > 0:
            raise ValueError(f"Lattice unit must be positive, got {self.h}")
        if len(cuboids) and np.any(cuboids[:, 1] <= cuboids[:, 0]):
            raise ValueError("Every cuboid needs max > min on all axes")
        origin.setflags(write=False)
        cuboids.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cuboids", cuboids)

    # ============================================
    # Cell grid
    # ============================================

    @cached_property
    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sorted lattice coordinates of every cuboid bound, per axis."""
        return tuple(np.unique(self.cuboids[:, :, axis]) for axis in range(3))

    @cached_property
    def cell_owner(self) -> np.ndarray:
        """Cuboid index per cell of the grid spanned by ``planes`` (-1 when empty)."""
        shape = tuple(max(len(p) - 1, 0) for p in self.planes)
        owner = np.full(shape, -1, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.cuboids):
            index = tuple(
                slice(int(np.searchsorted(self.planes[a], lo[a])), int(np.searchsorted(self.planes[a], hi[a])))
                for a in range(3)
            )
            # Overlaps are reported by validate_polycube; the first owner wins here.
            region = owner[index]
            region[region < 0] = k
        return owner

    @cached_property
    def _boundary(self) -> tuple[tuple[Facet, ...], np.ndarray, np.ndarray]:
        occupancy = self.cell_owner >= 0
        cells, axes, signs = voxel_boundary_quads(occupancy)
        facets = []
        lattice_corners = []
        for i, (cell, axis, sign) in enumerate(zip(cells, axes, signs)):
            axis, sign = int(axis), int(sign)
            grid_corners = cell[None, :] + np.array(AXIS_FACE_CORNERS[(axis, sign)])
            corners = np.stack([self.planes[a][grid_corners[:, a]] for a in range(3)], axis=1)
            lattice_corners.append(corners)
            facets.append(Facet(
                index=i, axis=axis, sign=sign,
                lo=tuple(int(c) for c in corners.min(axis=0)),
                hi=tuple(int(c) for c in corners.max(axis=0)),
                cuboid=int(self.cell_owner[tuple(cell)]),
            ))
        if not facets:
            return (), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 4), dtype=np.int64)
        flat = np.concatenate(lattice_corners)
        nodes, inverse = np.unique(flat, axis=0, return_inverse=True)
        return tuple(facets), nodes, inverse.reshape(-1, 4)

    @property
    def facets(self) -> tuple[Facet, ...]:
        return self._boundary[0]

    @property
    def boundary_nodes(self) -> np.ndarray:
        """(N, 3) integer lattice positions of facet corners."""
        return self._boundary[1]

    @property
    def facet_quads(self) -> np.ndarray:
        """(F, 4) outward counter-clockwise node indices, one quad per facet."""
        return self._boundary[2]

    @cached_property
    def facet_adjacency(self) -> np.ndarray:
        """(M, 2) sorted pairs of facets sharing an edge."""
        quads = self.facet_quads
        if len(quads) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        edges = np.stack([quads, np.roll(quads, -1, axis=1)], axis=-1).reshape(-1, 2)
        owners = np.repeat(np.arange(len(quads)), 4)
        keys = np.sort(edges, axis=1)
        order = np.lexsort((keys[:, 1], keys[:, 0]))
        keys, owners = keys[order], owners[order]
        same = np.all(keys[1:] == keys[:-1], axis=1)
        pairs = np.sort(np.stack([owners[:-1][same], owners[1:][same]], axis=1), axis=1)
        return np.unique(pairs, axis=0)

    # ============================================
    # Geometry
    # ============================================

    def to_physical(self, lattice_points) -> np.ndarray:
        return self.origin + self.h * np.asarray(lattice_points, dtype=np.float64)

    def to_lattice(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.origin) / self.h

    def boundary_mesh(self) -> TriMesh:
        """Outward-oriented triangulated boundary in physical coordinates."""
        return quads_to_trimesh(self.to_physical(self.boundary_nodes), self.facet_quads)

    def genus(self) -> int | list[int]:
        return mesh_genus(self.boundary_mesh())

    def volume(self) -> float:
        extents = self.cuboids[:, 1] - self.cuboids[:, 0]
        return float(np.prod(extents, axis=1).sum() * self.h ** 3)

    def transformed(self, transform: NormalizationTransform) -> "PolycubeComplex":
        """The same complex after undoing a frame normalization."""
        origin = transform.invert(self.origin[None, :])[0]
        return PolycubeComplex(self.h * 2.0 * transform.half_extent, origin, self.cuboids)

    # ============================================
    # Persistence
    # ============================================

    def to_json(self) -> dict:
        return {"h": self.h, "origin": self.origin.tolist(),
                "cuboids": [[lo.tolist(), hi.tolist()] for lo, hi in self.cuboids]}

    @classmethod
    def from_json(cls, data: dict) -> "PolycubeComplex":
        """Build from {"h", "origin", "cuboids": [[min, max], ...]}.

        Raises:
            PolycubeError: missing keys or non-integer corners
        """
        try:
            cuboids = np.asarray(data["cuboids"], dtype=np.float64).reshape(-1, 2, 3)
            origin = data.get("origin", [0.0, 0.0, 0.0])
            h = float(data["h"])
        except (KeyError, TypeError, ValueError) as e:
            raise PolycubeError(f"Invalid polycube document: {e}") from e
        if not np.array_equal(cuboids, np.round(cuboids)):
            raise PolycubeError("Cuboid corners must be integers in lattice units")
        try:
            return cls(h, origin, cuboids.astype(np.int64))
        except ValueError as e:
            raise PolycubeError(str(e)) from e

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str) -> "PolycubeComplex":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class VertexFacetAssignment:
    """Per-vertex owning facet and (u, v) lattice position on it."""
    facet_ids: np.ndarray
    uv: np.ndarray

    def __post_init__(self):
        facet_ids = np.asarray(self.facet_ids, dtype=np.int64).reshape(-1)
        uv = np.asarray(self.uv, dtype=np.float64).reshape(-1, 2)
        if len(facet_ids) != len(uv):
            raise ValueError(f"{len(facet_ids)} facet ids for {len(uv)} positions")
        facet_ids.setflags(write=False)
        uv.setflags(write=False)
        object.__setattr__(self, "facet_ids", facet_ids)
        object.__setattr__(self, "uv", uv)

    def __len__(self) -> int:
        return len(self.facet_ids)

    def positions(self, pc: PolycubeComplex) -> np.ndarray:
        """Physical positions of the projected vertices."""
        out = np.empty((len(self), 3))
        for facet in pc.facets:
            sel = self.facet_ids == facet.index
            if np.any(sel):
                out[sel] = pc.to_physical(facet.lattice_point(self.uv[sel]))
        return out

    def to_json(self) -> dict:
        return {"facet_ids": self.facet_ids.tolist(), "uv": self.uv.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "VertexFacetAssignment":
        return cls(np.array(data["facet_ids"], dtype=np.int64), np.array(data["uv"], dtype=np.float64))


def classify_normals(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dominant axis and sign of each normal; ties go to the lower axis."""
    normals = np.asarray(normals, dtype=np.float64)
    axes = np.argmax(np.abs(normals), axis=1)
    signs = np.where(normals[np.arange(len(normals)), axes] >= 0, 1, -1)
    return axes, signs


def rectangle_distance(lattice_points: np.ndarray, facet: Facet) -> np.ndarray:
    """Distance in lattice units from each point to the facet rectangle."""
    lo = np.asarray(facet.lo, dtype=np.float64)
    hi = np.asarray(facet.hi, dtype=np.float64)
    clamped = np.clip(lattice_points, lo, hi)
    return np.linalg.norm(lattice_points - clamped, axis=1)


def assign_vertices(points, normals, pc: PolycubeComplex) -> VertexFacetAssignment:
    """Project every vertex onto the nearest facet facing its dominant normal direction.

    Vertices whose direction class has no facet, or whose normal is zero,
    fall back to the nearest facet of any class.

    Raises:
        ClassificationError: the complex has no facets or the normals are not finite
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    facets = pc.facets
    if not facets:
        raise ClassificationError("Polycube complex has no boundary facets")
    if len(normals) != len(points) or not np.all(np.isfinite(normals)):
        raise ClassificationError("Vertex normals missing or not finite")

    lattice = pc.to_lattice(points)
    axes, signs = classify_normals(normals)
    degenerate = np.linalg.norm(normals, axis=1) == 0.0

    distance = np.stack([rectangle_distance(lattice, f) for f in facets], axis=1)
    facet_axis = np.array([f.axis for f in facets])
    facet_sign = np.array([f.sign for f in facets])
    matches = (facet_axis[None, :] == axes[:, None]) & (facet_sign[None, :] == signs[:, None])
    unmatched = ~matches.any(axis=1) | degenerate
    if np.any(unmatched):
        logger.warning(f"{int(unmatched.sum())} vertices have no facet facing their normal; using nearest facet")
    masked = np.where(matches | unmatched[:, None], distance, np.inf)
    facet_ids = np.argmin(masked, axis=1)

    uv = np.empty((len(points), 2))
    for facet in facets:
        sel = facet_ids == facet.index
        if not np.any(sel):
            continue
        lo, hi = facet.uv_bounds()
        uv[sel] = np.clip(lattice[sel][:, list(facet.tangents)], lo, hi)
    return VertexFacetAssignment(facet_ids, uv)
