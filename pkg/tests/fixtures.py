"""Mesh fixtures shared by unit and acceptance tests."""
import numpy as np

from ftdcascade.surface import plane_grid


def two_plateau(nx=41, ny=41, spacing=2.5, low=1.0, high=4.0):
    """Flat grid whose left half reads ``low`` and right half ``high``."""
    mesh = plane_grid(nx, ny, spacing)
    x = mesh.vertices[:, 0]
    clean = np.where(x < x.max() / 2.0, low, high)
    return mesh, clean


def spike(nx=15, ny=15, spacing=2.5, background=2.0, height=10.0):
    mesh = plane_grid(nx, ny, spacing)
    values = np.full(mesh.n_vertices, background)
    centre = (ny // 2) * nx + nx // 2
    values[centre] += height
    return mesh, values, centre


ONE_D_X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
ONE_D_Y = np.array([False, False, True, True])


def small_problems():
    """Fixed <=6-point 1-D and 2-D problems covering separable and overlapping cases."""
    yield ONE_D_X, ONE_D_Y, 10.0
    yield np.array([[0.0], [0.5], [1.0], [1.2], [2.0], [3.0]]), np.array([0, 0, 1, 0, 1, 1], bool), 1.0
    yield np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float), np.array([1, 1, 0, 0], bool), 1.0
    yield np.array([[0, 0], [1, 0], [0, 1], [3, 3], [4, 3], [3, 4]], float), np.array([0, 0, 0, 1, 1, 1], bool), 0.1
    yield np.array([[0, 0], [2, 1], [1, 2], [1, 1], [3, 0]], float), np.array([0, 1, 1, 0, 1], bool), 5.0
    yield np.array([[-1, 2], [0.5, 0.5], [2, -1], [1, 1]], float), np.array([0, 1, 0, 1], bool), 100.0
