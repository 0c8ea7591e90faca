"""
Reproducible sample data: random band-limited fields and smooth displacements.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, to_spectral, truncate


def random_volume_field(grid: Grid, rng: np.random.Generator, components: int | None = 3, amplitude: float = 1.0) -> np.ndarray:
    """Spectral random field, dealiased, real in physical space.

    ``components=None`` gives a scalar field.
    """
    shape = grid.shape if components is None else (components,) + grid.shape
    return amplitude * truncate(to_spectral(rng.standard_normal(shape)), grid)


def random_surface_field(grid: Grid, rng: np.random.Generator, components: int | None = None, amplitude: float = 1.0) -> np.ndarray:
    shape = grid.ksq.shape if components is None else (components,) + grid.ksq.shape
    return amplitude * truncate(to_spectral(rng.standard_normal(shape), (-2, -1)), grid, (-2, -1))


def horizontal_coordinates(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical (y2, y3, x1) arrays of shape (N2, N3, nv)."""
    (l2, l3), (n2, n3) = grid.config.period, grid.config.modes
    y2 = np.arange(n2) * l2 / n2
    y3 = np.arange(n3) * l3 / n3
    return np.meshgrid(y2, y3, grid.x1, indexing="ij")


def smooth_displacement(grid: Grid, amplitude: float) -> np.ndarray:
    """Spectral displacement with low horizontal modes, vanishing at the bottom.

    Each component is a trigonometric polynomial of degree one in the
    horizontal angles times (x1 + b)^2 / b^2.
    """
    y2, y3, x1 = horizontal_coordinates(grid)
    (l2, l3) = grid.config.period
    a2, a3 = 2.0 * np.pi * y2 / l2, 2.0 * np.pi * y3 / l3
    b = grid.depth
    profile = ((x1 + b) / b) ** 2
    xi = np.stack(
        [
            np.cos(a2) * profile,
            0.5 * np.sin(a3) * profile,
            0.3 * np.cos(a2 + a3) * profile,
        ]
    )
    return amplitude * to_spectral(xi)
