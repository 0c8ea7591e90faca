"""
Per-mode vertical two-point boundary value problems.

Every horizontal Fourier mode of a constant-coefficient elliptic or
implicit-parabolic problem on the slab reduces to

    D2 u - c u = f   at interior nodes,

closed by one boundary row at each end (a value or a one-sided first
difference).  Modes sharing the same coefficient ``c`` share one LU factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import Grid

BcKind = Literal["dirichlet", "neumann"]
Layout = Literal["mixed-top-neumann", "mixed-top-dirichlet", "full-dirichlet"]


class SingularModeError(ValueError):
    pass


@dataclass(frozen=True)
class BvpSpec:
    """Single-mode problem ``u'' - reaction u = rhs`` with end conditions.

    ``top`` and ``bottom`` are ``(kind, value)`` pairs.  A pure Neumann
    problem with zero reaction is singular; ``zero_mode_rule = "pin_bottom"``
    replaces the bottom row by u(-b) = bottom value.
    """

    reaction: complex
    rhs: np.ndarray
    top: tuple[BcKind, complex] = ("dirichlet", 0.0)
    bottom: tuple[BcKind, complex] = ("dirichlet", 0.0)
    zero_mode_rule: str | None = None


def _matrix(grid: Grid, reaction: float, top: BcKind, bottom: BcKind) -> np.ndarray:
    nv = grid.nv
    mat = grid.d2 - reaction * np.eye(nv)
    mat[0] = np.eye(nv)[0] if bottom == "dirichlet" else grid.d1[0]
    mat[-1] = np.eye(nv)[-1] if top == "dirichlet" else grid.d1[-1]
    return mat


def _singular(reaction: complex, top: BcKind, bottom: BcKind) -> bool:
    return top == "neumann" and bottom == "neumann" and reaction == 0


def solve_vertical_bvp(problem: BvpSpec, grid: Grid) -> np.ndarray:
    """Second-order finite-difference solve of one mode problem."""
    (tk, tv), (bk, bv) = problem.top, problem.bottom
    rhs = np.array(problem.rhs, dtype=complex)
    if rhs.shape != (grid.nv,):
        raise ValueError(f"rhs must have {grid.nv} entries")
    mat = _matrix(grid, 0.0, tk, bk).astype(complex)
    mat[1:-1] -= problem.reaction * np.eye(grid.nv)[1:-1]
    if _singular(problem.reaction, tk, bk):
        if problem.zero_mode_rule != "pin_bottom":
            raise SingularModeError("pure Neumann problem at zero reaction needs a zero_mode_rule")
        mat[0] = np.eye(grid.nv)[0]
    rhs[0], rhs[-1] = bv, tv
    return np.linalg.solve(mat, rhs)


class ModeSolver:
    """Factorized solver for all horizontal modes of one problem family.

    Parameters
    ----------
    grid : Grid
    reaction : ndarray
        Real coefficient ``c`` per mode, shape ``(N2, N3)``.
    top, bottom : {"dirichlet", "neumann"}
        Kind of the boundary row at each end.
    """

    def __init__(self, grid: Grid, reaction: np.ndarray, top: BcKind, bottom: BcKind):
        self.grid = grid
        self.top, self.bottom = top, bottom
        reaction = np.asarray(reaction, dtype=float)
        values, inverse = np.unique(np.round(reaction, 12), return_inverse=True)
        self._groups = []
        flat = inverse.reshape(-1)
        for gi, c in enumerate(values):
            idx = np.flatnonzero(flat == gi)
            if _singular(c, top, bottom):
                raise SingularModeError(f"singular mode system at modes {idx[:4].tolist()} (pure Neumann, zero reaction)")
            self._groups.append((idx, lu_factor(_matrix(grid, c, top, bottom))))

    def solve(self, rhs: np.ndarray, top_value=0.0, bottom_value=0.0) -> np.ndarray:
        """Solve for spectral ``rhs`` of shape ``(..., N2, N3, nv)``.

        Boundary entries of ``rhs`` are ignored and replaced by the supplied
        boundary values (scalars or arrays broadcastable to ``(..., N2, N3)``).
        """
        rhs = np.array(rhs, dtype=complex)
        lead = rhs.shape[:-3]
        n2, n3, nv = rhs.shape[-3:]
        rhs[..., 0] = bottom_value
        rhs[..., -1] = top_value
        flat = rhs.reshape((-1, n2 * n3, nv))
        out = np.empty_like(flat)
        for idx, lu in self._groups:
            block = flat[:, idx, :].reshape(-1, nv).T
            cols = np.concatenate([block.real, block.imag], axis=1)
            sol = lu_solve(lu, cols)
            m = block.shape[1]
            out[:, idx, :] = (sol[:, :m] + 1j * sol[:, m:]).T.reshape(flat.shape[0], idx.size, nv)
        return out.reshape(lead + (n2, n3, nv))


def mode_solver(grid: Grid, reaction_shift: float, top: BcKind, bottom: BcKind) -> ModeSolver:
    """Cached solver for ``D2 - (shift + |k|^2)`` with the given end rows."""
    key = ("mode_solver", float(reaction_shift), top, bottom)
    if key not in grid.cache:
        grid.cache[key] = ModeSolver(grid, reaction_shift + grid.ksq, top, bottom)
    return grid.cache[key]


_LAYOUTS = {
    "mixed-top-neumann": ("neumann", "dirichlet"),
    "mixed-top-dirichlet": ("dirichlet", "neumann"),
    "full-dirichlet": ("dirichlet", "dirichlet"),
}


def solve_poisson(
    f_hat: np.ndarray,
    grid: Grid,
    layout: Layout,
    top_data=0.0,
    bottom_data=0.0,
) -> np.ndarray:
    """Solve Laplace(u) = f mode by mode.

    Layouts
    -------
    ``mixed-top-neumann``
        d1 u = top_data on the surface, u = bottom_data at the bottom.
    ``mixed-top-dirichlet``
        u = top_data on the surface, d1 u = bottom_data at the bottom.
    ``full-dirichlet``
        u prescribed at both ends.

    Each layout fixes a value somewhere, so the zero mode needs no extra rule.
    """
    if layout not in _LAYOUTS:
        raise ValueError(f"unknown boundary layout {layout!r}")
    top, bottom = _LAYOUTS[layout]
    return mode_solver(grid, 0.0, top, bottom).solve(f_hat, top_data, bottom_data)


def harmonic_extension(f_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Closed-form harmonic extension with zero bottom value.

    Mode profile sinh(|k|(x1 + b)) / sinh(|k| b), evaluated in the
    overflow-free form exp(|k| x1)(1 - exp(-2|k|(x1+b))) / (1 - exp(-2|k| b));
    the zero mode gets (x1 + b) / b.
    """
    k = grid.kabs[..., None]
    x = grid.x1
    b = grid.depth
    with np.errstate(divide="ignore", invalid="ignore"):
        prof = np.exp(k * x) * (-np.expm1(-2.0 * k * (x + b))) / (-np.expm1(-2.0 * k * b))
    prof = np.where(k > 0, prof, (x + b) / b)
    return f_hat[..., None] * prof
