"""Exact closest-point queries against triangle surfaces."""

import numpy as np
from scipy.spatial import cKDTree

from geometry.mesh import TriMesh

CANDIDATES = 8


def closest_point_on_triangles(points: np.ndarray, a: np.ndarray, b: np.ndarray,
                               c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p, row-wise.

    Voronoi-region walk over vertices, edges and face; all arguments are
    (K, 3) arrays.
    """
    p = np.asarray(points, dtype=np.float64)
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c

    def dot(u, v):
        return np.einsum("ij,ij->i", u, v)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        result = a + ab * v[:, None] + ac * w[:, None]

        # Later assignments take priority, matching the region test order.
        in_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t_bc = np.where(in_bc, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
        result = np.where(in_bc[:, None], b + (c - b) * t_bc[:, None], result)

        in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t_ac = np.where(in_ac, d2 / (d2 - d6), 0.0)
        result = np.where(in_ac[:, None], a + ac * t_ac[:, None], result)

        in_c = (d6 >= 0) & (d5 <= d6)
        result = np.where(in_c[:, None], c, result)

        in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t_ab = np.where(in_ab, d1 / (d1 - d3), 0.0)
        result = np.where(in_ab[:, None], a + ab * t_ab[:, None], result)

        in_b = (d3 >= 0) & (d4 <= d3)
        result = np.where(in_b[:, None], b, result)

        in_a = (d1 <= 0) & (d2 <= 0)
        result = np.where(in_a[:, None], a, result)
    return result


class SurfaceProjector:
    """Reusable closest-point oracle for one triangle surface.

    Triangle centroids go into a cKDTree. Each query first bounds its
    distance with the nearest few triangles, then checks every triangle
    whose centroid lies within that bound plus the largest centroid-to-corner
    radius, so the answer is exact.
    """

    def __init__(self, mesh: TriMesh):
        if mesh.n_triangles == 0:
            raise ValueError("SurfaceProjector needs at least one triangle")
        self.mesh = mesh
        self._corners = mesh.triangle_corners()
        self._centroids = self._corners.mean(axis=1)
        self._radius = float(np.max(np.linalg.norm(
            self._corners - self._centroids[:, None, :], axis=2)))
        self._tree = cKDTree(self._centroids)

    def _evaluate(self, queries: np.ndarray, tri_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        corners = self._corners[tri_ids]
        closest = closest_point_on_triangles(queries, corners[:, 0], corners[:, 1], corners[:, 2])
        dist = np.linalg.norm(closest - queries, axis=1)
        return closest, dist

    def query(self, queries) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest surface points.

        Returns:
            (points, distances, triangle ids), one row per query
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(queries)
        k = min(CANDIDATES, self.mesh.n_triangles)
        _, near = self._tree.query(queries, k=k)
        near = np.asarray(near).reshape(n, k)

        best_pts = np.zeros((n, 3))
        best_dist = np.full(n, np.inf)
        best_tri = np.zeros(n, dtype=np.int64)
        for j in range(k):
            pts, dist = self._evaluate(queries, near[:, j])
            better = dist < best_dist
            best_pts[better], best_dist[better], best_tri[better] = pts[better], dist[better], near[better, j]

        candidates = self._tree.query_ball_point(queries, best_dist + self._radius)
        for i, tri_ids in enumerate(candidates):
            tri_ids = np.asarray(tri_ids, dtype=np.int64)
            if len(tri_ids) == 0:
                continue
            pts, dist = self._evaluate(np.repeat(queries[i:i + 1], len(tri_ids), axis=0), tri_ids)
            j = int(np.argmin(dist))
            if dist[j] < best_dist[i]:
                best_pts[i], best_dist[i], best_tri[i] = pts[j], dist[j], tri_ids[j]
        return best_pts, best_dist, best_tri


def closest_points(mesh: TriMesh, queries) -> tuple[np.ndarray, np.ndarray]:
    """Closest points on ``mesh`` and their distances for each query point."""
    points, distances, _ = SurfaceProjector(mesh).query(queries)
    return points, distances


def point_to_surface_distance(points, mesh: TriMesh) -> np.ndarray:
    return closest_points(mesh, points)[1]
