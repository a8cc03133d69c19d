"""Surface segmentation into one disk-shaped patch per polycube facet."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from geometry.mesh import TriMesh
from hexmesh.errors import SegmentationError
from polycube.complex import PolycubeComplex, VertexFacetAssignment, classify_normals, rectangle_distance

logger = logging.getLogger(__name__)

# Configuration
MEMBERSHIP_TOL = 1e-9
MAX_REPAIR_ROUNDS = 50


@dataclass(frozen=True)
class SegmentationLabels:
    """Per-triangle facet labels plus the data parameterization needs.

    Attributes:
        triangle_labels: (F,) facet id per triangle
        triangles: (F, 3) outward-oriented triangle connectivity
        loops: facet id -> boundary vertex loop, counter-clockwise seen from outside
        corner_vertices: (N,) mesh vertex standing in for each polycube boundary node
        complex: the polycube the labels refer to
    """
    triangle_labels: np.ndarray
    triangles: np.ndarray
    loops: dict
    corner_vertices: np.ndarray
    complex: PolycubeComplex

    @property
    def n_patches(self) -> int:
        return len(self.loops)

    def patch(self, facet_id: int) -> np.ndarray:
        """Triangle indices carrying the facet label."""
        return np.flatnonzero(self.triangle_labels == facet_id)


# ============================================
# Triangle graph
# ============================================

def _edge_pairs(triangles: np.ndarray) -> np.ndarray:
    """(M, 2) pairs of triangles sharing an edge."""
    edges = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=-1).reshape(-1, 2)
    owners = np.repeat(np.arange(len(triangles)), 3)
    keys = np.sort(edges, axis=1)
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    keys, owners = keys[order], owners[order]
    same = np.all(keys[1:] == keys[:-1], axis=1)
    return np.stack([owners[:-1][same], owners[1:][same]], axis=1)


def _label_components(labels: np.ndarray, pairs: np.ndarray) -> tuple[int, np.ndarray]:
    same = labels[pairs[:, 0]] == labels[pairs[:, 1]]
    kept = pairs[same]
    n = len(labels)
    graph = sparse.csr_matrix((np.ones(len(kept)), (kept[:, 0], kept[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)


# ============================================
# Labelling
# ============================================

def _memberships(positions: np.ndarray, assignment: VertexFacetAssignment, pc: PolycubeComplex) -> np.ndarray:
    """(V, F) bool: the projected vertex lies on the facet rectangle."""
    lattice = pc.to_lattice(positions)
    member = np.stack([rectangle_distance(lattice, f) <= MEMBERSHIP_TOL for f in pc.facets], axis=1)
    member[np.arange(len(assignment)), assignment.facet_ids] = True
    return member


def _vote(mesh: TriMesh, assignment: VertexFacetAssignment, pc: PolycubeComplex) -> np.ndarray:
    """Majority vote of vertex facets per triangle.

    Only facets facing the triangle normal are eligible when any exist. A
    vertex sitting on a shared facet edge votes for every facet it touches.
    Ties, including triangles without an eligible vote, go to the eligible
    facet nearest to the centroid of the projected corners.
    """
    positions = assignment.positions(pc)
    member = _memberships(positions, assignment, pc).astype(np.int64)
    scores = member[mesh.triangles].sum(axis=1)

    axes, signs = classify_normals(mesh.face_normals())
    facet_axis = np.array([f.axis for f in pc.facets])
    facet_sign = np.array([f.sign for f in pc.facets])
    facing = (facet_axis[None, :] == axes[:, None]) & (facet_sign[None, :] == signs[:, None])
    eligible = np.where(facing.any(axis=1, keepdims=True), facing, True)
    scores = np.where(eligible, scores, -1)
    tied = scores == scores.max(axis=1, keepdims=True)

    labels = np.argmax(tied, axis=1)
    ambiguous = np.flatnonzero(tied.sum(axis=1) > 1)
    if len(ambiguous):
        centroids = pc.to_lattice(positions[mesh.triangles[ambiguous]].mean(axis=1))
        distance = np.stack([rectangle_distance(centroids, f) for f in pc.facets], axis=1)
        labels[ambiguous] = np.argmin(np.where(tied[ambiguous], distance, np.inf), axis=1)
        logger.debug(f"Resolved {len(ambiguous)} tied triangle votes by centroid distance")
    return labels


def _repair_fragments(labels: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Give every label a single connected region.

    Each label keeps its largest component; the other fragments join the
    largest neighbouring region, smallest fragments first.
    """
    labels = labels.copy()
    for _ in range(MAX_REPAIR_ROUNDS):
        n_comp, comp = _label_components(labels, pairs)
        sizes = np.bincount(comp, minlength=n_comp)
        comp_label = np.zeros(n_comp, dtype=np.int64)
        comp_label[comp] = labels
        keep = {}
        for c in np.argsort(-sizes, kind="stable"):
            keep.setdefault(int(comp_label[c]), int(c))
        fragments = [c for c in np.argsort(sizes, kind="stable") if keep[int(comp_label[c])] != c]
        if not fragments:
            return labels

        cross = comp[pairs[:, 0]] != comp[pairs[:, 1]]
        a, b = comp[pairs[cross, 0]], comp[pairs[cross, 1]]
        updated = labels.copy()
        for c in fragments:
            neighbours = np.unique(np.concatenate([b[a == c], a[b == c]]))
            if len(neighbours) == 0:
                continue
            target = neighbours[np.argmax(sizes[neighbours])]
            updated[comp == c] = comp_label[target]
        logger.info(f"Relabelled {len(fragments)} fragment(s) by region growing")
        labels = updated
    return labels


# ============================================
# Verification
# ============================================

def _boundary_loop(triangles: np.ndarray) -> np.ndarray:
    """Single boundary loop of a disk patch, following triangle orientation.

    Raises:
        SegmentationError: no boundary, several loops or a pinched boundary
    """
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    present = {(int(u), int(v)) for u, v in directed}
    boundary = [(u, v) for u, v in present if (v, u) not in present]
    if not boundary:
        raise SegmentationError("Patch has no boundary")
    successor = {}
    for u, v in boundary:
        if u in successor:
            raise SegmentationError(f"Patch boundary is pinched at vertex {u}")
        successor[u] = v
    start = min(successor)
    loop = [start]
    while True:
        nxt = successor[loop[-1]]
        if nxt == start:
            break
        loop.append(nxt)
    if len(loop) != len(boundary):
        raise SegmentationError(f"Patch boundary has several loops ({len(boundary) - len(loop)} edges left over)")
    return np.array(loop, dtype=np.int64)


def _euler_characteristic(triangles: np.ndarray) -> int:
    edges = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    return len(np.unique(triangles)) - len(np.unique(edges, axis=0)) + len(triangles)


def _patch_adjacency(labels: np.ndarray, pairs: np.ndarray) -> set[tuple[int, int]]:
    a, b = labels[pairs[:, 0]], labels[pairs[:, 1]]
    cross = a != b
    return {(int(min(x, y)), int(max(x, y))) for x, y in zip(a[cross], b[cross])}


def _corner_vertices(positions: np.ndarray, labels: np.ndarray, triangles: np.ndarray,
                     pc: PolycubeComplex) -> np.ndarray:
    """Pick, per polycube boundary node, the nearest vertex touching all its facets."""
    n_vertices, n_facets = len(positions), len(pc.facets)
    incident = np.zeros((n_vertices, n_facets), dtype=bool)
    for corner in range(3):
        incident[triangles[:, corner], labels] = True

    node_facets = [[] for _ in range(len(pc.boundary_nodes))]
    for facet_id, quad in enumerate(pc.facet_quads):
        for node in quad:
            node_facets[node].append(facet_id)

    physical = pc.to_physical(pc.boundary_nodes)
    corners = np.empty(len(physical), dtype=np.int64)
    for node, facets in enumerate(node_facets):
        candidates = np.flatnonzero(incident[:, facets].all(axis=1))
        if len(candidates) == 0:
            raise SegmentationError(f"No vertex is shared by the patches of facets {facets}")
        distance = np.linalg.norm(positions[candidates] - physical[node], axis=1)
        corners[node] = candidates[np.argmin(distance)]
    if len(np.unique(corners)) != len(corners):
        raise SegmentationError("Two polycube corners map to the same surface vertex")
    return corners


def segment_surface(mesh: TriMesh, assignment: VertexFacetAssignment, pc: PolycubeComplex) -> SegmentationLabels:
    """Label triangles with facets and check the patches mirror the polycube.

    Args:
        mesh: closed input surface
        assignment: facet and (u, v) per mesh vertex
        pc: polycube complex the assignment refers to

    Returns:
        SegmentationLabels with one disk patch per facet

    Raises:
        SegmentationError: a facet without triangles, a non-disk patch or a
            patch adjacency that differs from the facet adjacency
        ValueError: the assignment does not cover every vertex
    """
    if len(assignment) != mesh.n_vertices:
        raise ValueError(f"{len(assignment)} assigned vertices for a mesh of {mesh.n_vertices}")
    mesh = mesh.oriented_outward()
    pairs = _edge_pairs(mesh.triangles)
    labels = _repair_fragments(_vote(mesh, assignment, pc), pairs)

    n_facets = len(pc.facets)
    missing = sorted(set(range(n_facets)) - set(labels.tolist()))
    if missing:
        raise SegmentationError(f"Facets without a surface patch: {missing}")

    _, comp = _label_components(labels, pairs)
    loops, bad = {}, []
    for facet_id in range(n_facets):
        tris = mesh.triangles[labels == facet_id]
        if len(np.unique(comp[labels == facet_id])) != 1 or _euler_characteristic(tris) != 1:
            bad.append(facet_id)
            continue
        try:
            loops[facet_id] = _boundary_loop(tris)
        except SegmentationError as e:
            logger.warning(f"Patch {facet_id}: {e}")
            bad.append(facet_id)
    if bad:
        raise SegmentationError(f"Patches that are not topological disks: {bad}")

    expected = {(int(a), int(b)) for a, b in pc.facet_adjacency}
    found = _patch_adjacency(labels, pairs)
    if found != expected:
        offending = sorted(found ^ expected)
        raise SegmentationError(f"Patch adjacency differs from facet adjacency at {offending[:10]}")

    corners = _corner_vertices(assignment.positions(pc), labels, mesh.triangles, pc)
    logger.info(f"Segmented {mesh.n_triangles} triangles into {n_facets} patches")
    return SegmentationLabels(labels, mesh.triangles, loops, corners, pc)
