"""
Lagrangian kinematics of the flow map eta = x + xi.

Matrix fields are stored as ``(3, 3, N2, N3, nv)`` physical arrays.  The
gradient convention is ``G[k, j] = d_k f^j`` (first index = derivative), the
flow-map gradient is ``Deta[j, k] = d_k eta^j`` and the inverse transpose
``Amat[i, k]`` is the coefficient of ``d_k`` in the i-th component of the
Lagrangian gradient, so that sum_k Amat[i, k] d_k eta^j = delta_ij.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, d1, dh, grad_vector, to_physical, to_spectral, truncate


class DegenerateFlowMap(ValueError):
    """Raised when det(I + grad xi) drops below the configured floor."""

    def __init__(self, j_min_found: float, floor: float):
        self.j_min_found = j_min_found
        self.floor = floor
        self.j_inv_max = np.inf if j_min_found <= 0 else 1.0 / j_min_found
        super().__init__(
            f"degenerate flow map: min J = {j_min_found:.6g} < j_min = {floor:.6g} "
            f"(||1/J||_inf = {self.j_inv_max:.6g})"
        )


@dataclass(frozen=True, eq=False)
class Kinematics:
    grad_xi: np.ndarray
    Deta: np.ndarray
    Amat: np.ndarray
    J: np.ndarray
    cof: np.ndarray
    Nvec: np.ndarray

    @property
    def j_inv_max(self) -> float:
        return float(np.max(1.0 / self.J))


def det3(m: np.ndarray) -> np.ndarray:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def cofactor3(m: np.ndarray) -> np.ndarray:
    """Cofactor matrix C with C[i, j] = (-1)^(i+j) minor(i, j), so C = det(m) m^{-T}."""
    c = np.empty_like(m)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            c[i, j] = m[i1, j1] * m[i2, j2] - m[i1, j2] * m[i2, j1]
    return c


def physical_gradient(xi_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical G[k, j] = d_k xi^j from spectral displacement data."""
    return to_physical(grad_vector(xi_hat, grid))


def kinematics_from_gradient(grad_xi: np.ndarray, j_min: float | None = None) -> Kinematics:
    deta = np.swapaxes(grad_xi, 0, 1).copy()
    for i in range(3):
        deta[i, i] += 1.0
    J = det3(deta)
    jmin = float(np.min(J))
    if j_min is not None and not jmin >= j_min:
        raise DegenerateFlowMap(jmin, j_min)
    cof_raw = cofactor3(deta)
    amat = cof_raw / J
    cof = J * amat
    nvec = cof[:, 0, ..., -1] if cof.ndim == 5 else cof[:, 0]
    return Kinematics(grad_xi=grad_xi, Deta=deta, Amat=amat, J=J, cof=cof, Nvec=nvec)


def kinematics(xi_hat: np.ndarray, grid: Grid, j_min: float | None = None) -> Kinematics:
    """Flow-map package from spectral displacement ``xi_hat`` (3, N2, N3, nv).

    ``j_min`` defaults to the grid configuration floor.  A flow map whose
    Jacobian dips below it raises :class:`DegenerateFlowMap`.
    """
    floor = grid.config.j_min if j_min is None else j_min
    return kinematics_from_gradient(physical_gradient(xi_hat, grid), floor)


def jacobian_expansion(grad_xi: np.ndarray) -> np.ndarray:
    """1 + div xi + quadratic + cubic terms of det(I + grad xi).

    ``grad_xi[k, j] = d_k xi^j``; the horizontal perp gradient is
    (-d_3, d_2).
    """
    g = grad_xi

    def perp_dot(a: int, c: int) -> np.ndarray:
        # grad_h^perp xi^a . grad_h xi^c
        return -g[2, a] * g[1, c] + g[1, a] * g[2, c]

    divergence = g[0, 0] + g[1, 1] + g[2, 2]
    div_h = g[1, 1] + g[2, 2]
    quadratic = g[0, 0] * div_h - (g[0, 1] * g[1, 0] + g[0, 2] * g[2, 0]) + perp_dot(1, 2)
    cubic = g[0, 0] * perp_dot(1, 2) + g[0, 1] * perp_dot(2, 0) + g[0, 2] * perp_dot(0, 1)
    return 1.0 + divergence + quadratic + cubic


# ---------------------------------------------------------------------------
# Lagrangian differential operators


def _spectral(values: np.ndarray, grid: Grid, dealias: bool) -> np.ndarray:
    hat = to_spectral(values)
    return truncate(hat, grid) if dealias else hat


def grad_A(kin: Kinematics, f_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical (grad_A f)_i = A_i^k d_k f for a spectral scalar."""
    g = to_physical(np.stack([d1(f_hat, grid), dh(f_hat, grid, 2), dh(f_hat, grid, 3)]))
    return np.einsum("ik...,k...->i...", kin.Amat, g)


def grad_A_vector(kin: Kinematics, v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical (grad_A v)_ij = A_i^k d_k v^j."""
    g = to_physical(grad_vector(v_hat, grid))
    return np.einsum("ik...,kj...->ij...", kin.Amat, g)


def div_A(kin: Kinematics, v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    return np.einsum("ii...->...", grad_A_vector(kin, v_hat, grid))


def sym_grad_A(kin: Kinematics, v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    ga = grad_A_vector(kin, v_hat, grid)
    return ga + np.swapaxes(ga, 0, 1)


def div_A_tensor(kin: Kinematics, s_phys: np.ndarray, grid: Grid, dealias: bool = True) -> np.ndarray:
    """Physical (div_A S)_i = A_j^k d_k S_ij for a physical matrix field."""
    s_hat = _spectral(s_phys, grid, dealias)
    ds = to_physical(np.stack([d1(s_hat, grid), dh(s_hat, grid, 2), dh(s_hat, grid, 3)]))
    # ds[k, i, j] = d_k S_ij
    return np.einsum("jk...,kij...->i...", kin.Amat, ds)


def lap_A(kin: Kinematics, f_hat: np.ndarray, grid: Grid, dealias: bool = True) -> np.ndarray:
    """Physical Delta_A f = A_i^k d_k (A_i^l d_l f)."""
    inner = _spectral(grad_A(kin, f_hat, grid), grid, dealias)
    d = to_physical(np.stack([d1(inner, grid), dh(inner, grid, 2), dh(inner, grid, 3)]))
    return np.einsum("ik...,ki...->...", kin.Amat, d)


def lagrangian_operators(kin: Kinematics, f_hat: np.ndarray, grid: Grid, dealias: bool = True) -> dict:
    """Lagrangian operators applied to a spectral scalar or vector field.

    Scalars return ``grad_A`` and ``lap_A``; vectors return ``grad_A``
    (the matrix), ``div_A``, ``sym_grad_A`` and ``div_sym_grad_A``.
    All outputs are physical arrays.
    """
    if f_hat.ndim == 3:
        return {"grad_A": grad_A(kin, f_hat, grid), "lap_A": lap_A(kin, f_hat, grid, dealias)}
    ga = grad_A_vector(kin, f_hat, grid)
    sym = ga + np.swapaxes(ga, 0, 1)
    return {
        "grad_A": ga,
        "div_A": np.einsum("ii...->...", ga),
        "sym_grad_A": sym,
        "div_sym_grad_A": div_A_tensor(kin, sym, grid, dealias),
    }


# ---------------------------------------------------------------------------
# Identity residuals


def piola_residual(kin: Kinematics, grid: Grid) -> np.ndarray:
    """Physical d_j (J A_i^j) for i = 1, 2, 3 (no dealiasing)."""
    c_hat = to_spectral(kin.cof)
    return to_physical(d1(c_hat[:, 0], grid) + dh(c_hat[:, 1], grid, 2) + dh(c_hat[:, 2], grid, 3))


def kinematic_identity_residuals(
    xi_pair: tuple[np.ndarray, np.ndarray], dt: float, v_hat: np.ndarray, grid: Grid
) -> dict:
    """Max-norm residuals of the Piola identity and the time-derivative identities.

    ``xi_pair`` holds spectral displacements at t and t + dt and ``v_hat`` the
    velocity at the midpoint.  The time derivatives of A and J are central
    differences, compared with the identities evaluated at the averaged
    kinematics.
    """
    k0 = kinematics(xi_pair[0], grid, j_min=0.0)
    k1 = kinematics(xi_pair[1], grid, j_min=0.0)
    kmid = kinematics(0.5 * (xi_pair[0] + xi_pair[1]), grid, j_min=0.0)
    gv = to_physical(grad_vector(v_hat, grid))  # gv[m, k] = d_m v^k
    a_t = (k1.Amat - k0.Amat) / dt
    # d_t A_i^j = -A_k^j A_i^m d_m v^k
    a_rhs = -np.einsum("kj...,im...,mk...->ij...", kmid.Amat, kmid.Amat, gv)
    j_t = (k1.J - k0.J) / dt
    j_rhs = kmid.J * np.einsum("ij...,ji...->...", kmid.Amat, gv)
    return {
        "piola": float(np.max(np.abs(piola_residual(kmid, grid)))),
        "dA_dt": float(np.max(np.abs(a_t - a_rhs))),
        "dJ_dt": float(np.max(np.abs(j_t - j_rhs))),
    }
