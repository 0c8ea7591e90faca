"""
Nonlinearity tensors that recast the Lagrangian system in flat form.

With a = J A (``kin.cof``) the divergence constraint div_A v = 0 becomes
div v = B1 : grad v and the free-surface stress condition becomes
p n0 - g xi^1 n0 - nu D(v) n0 = B2 : grad_h v.  Contractions:

* ``(B1 : grad v) = B1[i, j] d_j v^i``
* ``(B2 : grad_h v)^j = B2[j, alpha, i] d_alpha v^i`` with alpha in {2, 3}
  stored at index 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowmap import Kinematics, div_A_tensor, grad_A, kinematics
from .grid import Grid, grad_vector, to_physical, to_spectral, truncate


class TensorFloorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BTensors:
    B1: np.ndarray
    B2: np.ndarray
    a1vec: np.ndarray
    a1norm: np.ndarray


@dataclass(frozen=True, eq=False)
class RhsBundle:
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray


def _check_floor(name: str, values: np.ndarray, floor: float) -> None:
    low = float(np.min(values))
    if not low >= floor:
        raise TensorFloorError(f"{name} = {low:.6g} below floor {floor:.6g}")


def assemble_b1(kin: Kinematics, floor: float = 0.1) -> np.ndarray:
    """B1 = I - a / a_11."""
    a = kin.cof
    _check_floor("a_11", a[0, 0], floor)
    b1 = -a / a[0, 0]
    for i in range(3):
        b1[i, i] += 1.0
    return b1


def contract_b1(b1: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """B1 : grad v with ``grad_v[k, j] = d_k v^j``."""
    return np.einsum("ij...,ji...->...", b1, grad_v)


def _blocks(a: np.ndarray) -> dict:
    """Internal 3x2 blocks of the surface tensor; columns are d_2, d_3."""
    a11, a21, a31 = a[0, 0], a[1, 0], a[2, 0]
    s2 = a[0, 1] * a11 + a[1, 1] * a21 + a[2, 1] * a31
    s3 = a[0, 2] * a11 + a[1, 2] * a21 + a[2, 2] * a31

    def mat(rows):
        return np.array([[np.asarray(x) for x in row] for row in rows])

    b_1 = mat(
        [
            [s2 + a[0, 1] * a11, s3 + a[0, 2] * a11],
            [a[0, 1] * a21, a[0, 2] * a21],
            [a[0, 1] * a31, a[0, 2] * a31],
        ]
    )
    b_2 = mat(
        [
            [a[1, 1] * a11 - 1.0, a[1, 2] * a11],
            [s2 + a[1, 1] * a21, s3 + a[1, 2] * a21],
            [a[1, 1] * a31, a[1, 2] * a31],
        ]
    )
    b_3 = mat(
        [
            [a[2, 1] * a11, a[2, 2] * a11 - 1.0],
            [a[2, 1] * a21, a[2, 2] * a21],
            [s2 + a[2, 1] * a31, s3 + a[2, 2] * a31],
        ]
    )
    b_4 = mat(
        [
            [-a[0, 1], -a[0, 2]],
            [1.0 - a[1, 1], -a[1, 2]],
            [-a[2, 1], 1.0 - a[2, 2]],
        ]
    )
    b_h = -mat(
        [
            [a[0, 1], a[0, 2]],
            [a[1, 1] - a11, a[1, 2]],
            [a[2, 1], a[2, 2] - a11],
        ]
    ) / a11
    return {"B1": b_1, "B2": b_2, "B3": b_3, "B4": b_4, "Bh": b_h}


def surface_forms(a: np.ndarray, J: np.ndarray, nu: float, gh: np.ndarray) -> np.ndarray:
    """Evaluate the three surface forms for a given tangential gradient.

    ``gh[i, alpha]`` holds d_alpha v^i (alpha = 2, 3 at index 0, 1).  The
    returned array has components j = 1, 2, 3.
    """
    blk = _blocks(a)
    a11, a21, a31 = a[0, 0], a[1, 0], a[2, 0]
    n2 = a11 * a11 + a21 * a21 + a31 * a31

    def c(block):
        return np.einsum("ia...,ia...->...", block, gh)

    cb1, cb2, cb3, cb4, cbh = (c(blk[k]) for k in ("B1", "B2", "B3", "B4", "Bh"))
    d2v1, d3v1 = gh[0, 0], gh[0, 1]
    div_h = gh[1, 0] + gh[2, 1]
    # dimensionless pieces; the surface forms are -nu times these
    t22 = (
        -a11 * (a11**2 + a31**2 - n2**2) * d2v1
        + (a11**2 + a31**2) * (a21 * cb1 - a11 * cb2)
        + n2 * a21 * a11**2 * (-div_h + cbh)
        - a21 * a31 * (-a11 * d3v1 + (a31 * cb1 - a11 * cb3))
    ) / (a11 * n2**2)
    t23 = (
        -a11 * (a11**2 + a21**2 - n2**2) * d3v1
        + (a11**2 + a21**2) * (a31 * cb1 - a11 * cb3)
        + n2 * a31 * a11**2 * (-div_h + cbh)
        - a21 * a31 * (-a11 * d2v1 + (a21 * cb1 - a11 * cb2))
    ) / (a11 * n2**2)
    b22 = -nu * t22
    b23 = -nu * t23
    t21 = (
        2.0 * a21 * n2 * J * d2v1
        + 2.0 * a31 * n2 * J * d3v1
        + 2.0 * J * (a21 * n2 * (-t22) + a31 * n2 * (-t23) + a11 * n2 * cbh)
        + 2.0 * a11 * n2 * ((1.0 - J) * div_h - cb4)
        - a11 * (a21 * d2v1 + a31 * d3v1 + a11 * cb1 + a21 * cb2 + a31 * cb3)
    ) / (a11 * n2 * J)
    b21 = -nu * t21
    return np.stack([b21, b22, b23])


def assemble_b2(kin: Kinematics, nu: float, floor: float = 0.1, top_only: bool = False) -> np.ndarray:
    """B2[j, alpha, i] extracted from the surface forms.

    The tensor is evaluated on the whole slab, or only on the top layer
    (where it is used) when ``top_only`` is set.
    """
    a, J = kin.cof, kin.J
    if top_only:
        a, J = a[..., -1], J[..., -1]
    _check_floor("a_11", a[0, 0], floor)
    _check_floor("|a_1|", np.sqrt(a[0, 0] ** 2 + a[1, 0] ** 2 + a[2, 0] ** 2), floor)
    _check_floor("J", J, floor)
    pts = J.shape
    out = np.empty((3, 2, 3) + pts)
    for i in range(3):
        for alpha in range(2):
            gh = np.zeros((3, 2) + pts)
            gh[i, alpha] = 1.0
            out[:, alpha, i] = surface_forms(a, J, nu, gh)
    return out


def contract_b2(b2: np.ndarray, gh: np.ndarray) -> np.ndarray:
    """(B2 : grad_h v)^j = B2[j, alpha, i] gh[i, alpha]."""
    return np.einsum("jai...,ia...->j...", b2, gh)


def boundary_reference(A: np.ndarray, J: float, nu: float, gh: np.ndarray) -> np.ndarray:
    """Flat-form surface data implied by the Lagrangian conditions at one point.

    Solves for (d_1 v, q - g xi^1) from the stress balance along the
    Lagrangian normal J A e1 together with div_A v = 0, then returns
    (q - g xi^1) n0 - nu D(v) n0.  Used as an independent check of the
    closed-form surface tensor.
    """
    normal = J * A[:, 0]

    def residual(x):
        G = np.vstack([x[:3], gh[:, 0], gh[:, 1]])
        ga = A @ G
        sym = ga + ga.T
        return np.concatenate([x[3] * normal - nu * sym @ normal, [np.trace(ga)]])

    r0 = residual(np.zeros(4))
    mat = np.column_stack([residual(e) - r0 for e in np.eye(4)])
    x = np.linalg.solve(mat, -r0)
    G = np.vstack([x[:3], gh[:, 0], gh[:, 1]])
    sym = G + G.T
    return x[3] * np.array([1.0, 0.0, 0.0]) - nu * sym[:, 0]


def assemble_tensors(kin: Kinematics, nu: float, floor: float = 0.1, top_only: bool = False) -> BTensors:
    a = kin.cof
    a1 = np.stack([a[0, 0], a[1, 0], a[2, 0]])
    return BTensors(
        B1=assemble_b1(kin, floor),
        B2=assemble_b2(kin, nu, floor, top_only),
        a1vec=a1,
        a1norm=np.sqrt(np.sum(a1 * a1, axis=0)),
    )


def _flat_kinematics(grid: Grid) -> Kinematics:
    key = ("flat_kinematics",)
    if key not in grid.cache:
        grid.cache[key] = kinematics(np.zeros((3,) + grid.shape, dtype=complex), grid)
    return grid.cache[key]


def assemble_rhs(
    kin: Kinematics,
    bt: BTensors,
    v_hat: np.ndarray,
    q_hat: np.ndarray,
    grid: Grid,
    nu: float,
    dealias: bool = True,
) -> RhsBundle:
    """Spectral F1, F2 and surface F3 for given spectral (v, q).

    F1 = nu (div_A D_A(v) - div D(v)) - (grad_A q - grad q), where both
    brackets are evaluated with the same pointwise-product pipeline (nested
    first differences, truncation after transforming back).
    """
    gv_phys = to_physical(grad_vector(v_hat, grid))

    def lagrangian_part(k: Kinematics) -> np.ndarray:
        ga = np.einsum("ik...,kj...->ij...", k.Amat, gv_phys)
        sym = ga + np.swapaxes(ga, 0, 1)
        out = to_spectral(nu * div_A_tensor(k, sym, grid, dealias) - grad_A(k, q_hat, grid))
        return truncate(out, grid) if dealias else out

    # The flat-map evaluation goes through the same nested first differences
    # and truncation, so F1 vanishes identically when xi = 0.
    f1 = lagrangian_part(kin) - lagrangian_part(_flat_kinematics(grid))
    f2 = to_spectral(contract_b1(bt.B1, gv_phys))
    gh_top = np.stack([gv_phys[1, :, ..., -1], gv_phys[2, :, ..., -1]], axis=1)
    b2_top = bt.B2 if bt.B2.ndim == 5 else bt.B2[..., -1]
    f3 = to_spectral(contract_b2(b2_top, gh_top), (-2, -1))
    if dealias:
        f2 = truncate(f2, grid)
        f3 = truncate(f3, grid, (-2, -1))
    return RhsBundle(F1=f1, F2=f2, F3=f3)
