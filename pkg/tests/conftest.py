"""Shared pytest fixtures."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from geometry import HexMesh, box_surface, voxel_surface  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_cube():
    """Closed unit cube surface, 8 vertices and 12 triangles."""
    return box_surface((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def fine_cube():
    """Unit cube surface with every face split 4 x 4."""
    return box_surface((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), divisions=4)


@pytest.fixture
def voxel_torus():
    """3 x 3 x 1 ring of cells, genus 1."""
    occupancy = np.ones((3, 3, 1), dtype=bool)
    occupancy[1, 1, 0] = False
    return voxel_surface(occupancy)


@pytest.fixture
def voxel_eight():
    """5 x 3 x 1 slab with two through holes, genus 2."""
    occupancy = np.ones((5, 3, 1), dtype=bool)
    occupancy[1, 1, 0] = False
    occupancy[3, 1, 0] = False
    return voxel_surface(occupancy)


@pytest.fixture
def unit_hex():
    corners = np.array([
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ], dtype=np.float64)
    return HexMesh(corners, np.arange(8).reshape(1, 8))
