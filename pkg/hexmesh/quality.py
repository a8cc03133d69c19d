"""Scaled Jacobian quality metric for hex meshes."""

import logging
from dataclasses import dataclass

import numpy as np

from geometry.mesh import HexMesh

logger = logging.getLogger(__name__)

# Edge neighbours per corner, ordered so an undistorted hex gives +1 everywhere.
HEX_CORNER_NEIGHBORS = np.array([
    [1, 3, 4], [2, 0, 5], [3, 1, 6], [0, 2, 7],
    [7, 5, 0], [4, 6, 1], [5, 7, 2], [6, 4, 3],
], dtype=np.int64)

HISTOGRAM_BINS = 40
HISTOGRAM_EDGES = np.linspace(-1.0, 1.0, HISTOGRAM_BINS + 1)


def corner_edges(corners: np.ndarray) -> np.ndarray:
    """(H, 8, 3, 3) edge vectors leaving each corner of (H, 8, 3) hex corners."""
    return corners[:, HEX_CORNER_NEIGHBORS, :] - corners[:, :, None, :]


def corner_jacobians(vertices, hexes) -> tuple[np.ndarray, np.ndarray]:
    """Scaled Jacobian at every hex corner.

    Returns:
        (values, degenerate): (H, 8) determinants of the normalized edge
        triples, and a flag for corners with a zero-length edge (value 0)
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    edges = corner_edges(vertices[np.asarray(hexes, dtype=np.int64)])
    lengths = np.linalg.norm(edges, axis=-1)
    degenerate = np.any(lengths == 0.0, axis=-1)
    unit = edges / np.where(lengths > 0, lengths, 1.0)[..., None]
    values = np.einsum("...i,...i->...", unit[..., 0, :], np.cross(unit[..., 1, :], unit[..., 2, :]))
    return np.where(degenerate, 0.0, values), degenerate


@dataclass(frozen=True)
class QualityReport:
    """Scaled Jacobian summary of a hex mesh.

    Attributes:
        per_hex: (H,) minimum corner value per hex
        histogram: counts over HISTOGRAM_EDGES, summing to H
        min_sj: global minimum
        inverted: hexes with a negative minimum
        degenerate: hexes with a zero-length edge
        history: global minimum after each accepted optimization pass
    """
    per_hex: np.ndarray
    histogram: np.ndarray
    min_sj: float
    inverted: int
    degenerate: int
    history: tuple[float, ...] = ()

    @property
    def hex_count(self) -> int:
        return len(self.per_hex)

    def to_dict(self) -> dict:
        return {
            "hex_count": self.hex_count,
            "min_scaled_jacobian": self.min_sj,
            "mean_scaled_jacobian": float(self.per_hex.mean()),
            "inverted": self.inverted,
            "degenerate": self.degenerate,
            "bin_edges": HISTOGRAM_EDGES.tolist(),
            "histogram": self.histogram.tolist(),
            "history": list(self.history),
        }


def scaled_jacobian(mesh: HexMesh) -> QualityReport:
    """Per-hex minimum scaled Jacobian plus its histogram.

    Raises:
        ValueError: the mesh has no hexes
    """
    if mesh.n_hexes == 0:
        raise ValueError("Cannot measure quality of an empty hex mesh")
    values, degenerate = corner_jacobians(mesh.vertices, mesh.hexes)
    per_hex = values.min(axis=1)
    histogram, _ = np.histogram(np.clip(per_hex, -1.0, 1.0), bins=HISTOGRAM_EDGES)
    report = QualityReport(
        per_hex=per_hex,
        histogram=histogram,
        min_sj=float(per_hex.min()),
        inverted=int(np.sum(per_hex < 0)),
        degenerate=int(np.any(degenerate, axis=1).sum()),
    )
    if report.degenerate:
        logger.warning(f"{report.degenerate} hex(es) have a zero-length edge")
    return report


def render_histogram(report: QualityReport, width: int = 40) -> str:
    """Text histogram of the non-empty bins, one line per bin."""
    peak = max(int(report.histogram.max()), 1)
    lines = [
        f"hexes: {report.hex_count}  min SJ: {report.min_sj:.4f}  "
        f"inverted: {report.inverted}  degenerate: {report.degenerate}"
    ]
    for lo, hi, count in zip(HISTOGRAM_EDGES[:-1], HISTOGRAM_EDGES[1:], report.histogram):
        if count == 0:
            continue
        bar = "#" * max(1, round(width * int(count) / peak))
        lines.append(f"[{lo:+.2f}, {hi:+.2f})  {int(count):>8d}  {bar}")
    return "\n".join(lines)
