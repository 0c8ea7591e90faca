"""
Divergence removal and homogenization of the free-surface stress data.

Given the data (F1, F2, F3) of the linear free-boundary problem on a uniform
time grid t_k = k dt (k = 0..K), this module builds

* U with div U = F2 and U^1 = 0 at the bottom,
* a divergence-free V whose surface stress cancels the modified data
  F3~ = F3 + nu D(U) n0 and whose bottom trace cancels U,
* the pressure P1 that absorbs the normal stress,

so that the remainder W = u - U - V solves a free-boundary Stokes problem
with homogeneous boundary data.  V is assembled from a curl of a vector
potential phi driven by a surface system for Phi = phi|top, a bottom
correction V2 and a small closure field that removes the remaining
discretization defect of the tangential stress rows.

All volume series are spectral arrays with the time index first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import harmonic_extension, mode_solver
from .grid import Grid, d1, dd1, dh, div, div_sym_grad, grad, stress_top


# ---------------------------------------------------------------------------
# Cutoffs and time extension


def smoothstep(u: np.ndarray) -> np.ndarray:
    """Quintic ramp from 0 (u <= 0) to 1 (u >= 1) with two continuous derivatives."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass(frozen=True, eq=False)
class Cutoffs:
    """Vertical cutoff profiles sampled on the grid nodes.

    ``chi_b`` equals 1 near the bottom (x1 <= -2b/3) and 0 for x1 > -b/3;
    ``chi_f`` equals 1 for x1 > -2b/3 and 0 for x1 < -5b/6.
    """

    x1: np.ndarray
    chi_b: np.ndarray
    chi_f: np.ndarray

    @staticmethod
    def evaluate(x1: np.ndarray, b: float) -> tuple[np.ndarray, np.ndarray]:
        x1 = np.asarray(x1, dtype=float)
        chi_b = 1.0 - smoothstep((x1 + 2.0 * b / 3.0) / (b / 3.0))
        chi_f = smoothstep((x1 + 5.0 * b / 6.0) / (b / 6.0))
        return chi_b, chi_f


def make_cutoffs(grid: Grid) -> Cutoffs:
    chi_b, chi_f = Cutoffs.evaluate(grid.x1, grid.depth)
    return Cutoffs(x1=grid.x1, chi_b=chi_b, chi_f=chi_f)


def chi_start(t: np.ndarray, T: float) -> np.ndarray:
    """Cutoff equal to 1 on [-T/4, 0] and 0 for t <= -T/2."""
    return smoothstep((np.asarray(t, dtype=float) + 0.5 * T) / (0.25 * T))


def chi_end(t: np.ndarray, T: float) -> np.ndarray:
    """Cutoff equal to 1 on [T, 5T/4] and 0 for t >= 3T/2."""
    return 1.0 - smoothstep((np.asarray(t, dtype=float) - 1.25 * T) / (0.25 * T))


class TimeExtension:
    """Reflection extension of a series sampled at t_k = k dt, k = 0..K.

    Extended indices run from -K/2 to 3K/2.  Before 0 the value is
    (3 A(-t) - 2 A(-2t)) chi_start(t), after T it is
    (3 A(2T - t) - 2 A(3T - 2t)) chi_end(t); both are evaluated as
    A + 2 (A - A') so that the one-sided limits at the endpoints reproduce
    the endpoint sample bit for bit.
    """

    def __init__(self, n_steps: int, dt: float):
        if n_steps < 4 or n_steps % 2:
            raise ValueError(
                f"time extension needs an even number of steps >= 4 (got {n_steps}); "
                "the reflection stencil would leave the sampled interval"
            )
        self.K = int(n_steps)
        self.dt = float(dt)
        self.T = self.K * self.dt
        self.k_first = -self.K // 2
        self.k_last = 3 * self.K // 2
        self.indices = np.arange(self.k_first, self.k_last + 1)
        self.times = self.indices * self.dt
        self.weights = np.where(
            self.indices < 0,
            chi_start(self.times, self.T),
            np.where(self.indices > self.K, chi_end(self.times, self.T), 1.0),
        )

    @property
    def size(self) -> int:
        return self.indices.size

    def position(self, k: int) -> int:
        """Array position of extended index ``k``."""
        return int(k - self.k_first)

    def sample(self, series, k: int):
        """Extended value at index ``k`` from a series indexable by 0..K."""
        if not self.k_first <= k <= self.k_last:
            raise IndexError(f"extended index {k} outside [{self.k_first}, {self.k_last}]")
        if 0 <= k <= self.K:
            return series[k]
        if k < 0:
            a, a2 = series[-k], series[-2 * k]
        else:
            a, a2 = series[2 * self.K - k], series[3 * self.K - 2 * k]
        w = self.weights[self.position(k)]
        return (a + 2.0 * (a - a2)) * w

    def apply(self, series: np.ndarray) -> np.ndarray:
        series = np.asarray(series)
        if series.shape[0] != self.K + 1:
            raise ValueError(f"series must have {self.K + 1} samples, got {series.shape[0]}")
        return np.stack([self.sample(series, int(k)) for k in self.indices])


def time_extend(series: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Extend samples on [0, T] to [-T/2, 3T/2]; returns (times, values)."""
    ext = TimeExtension(np.asarray(series).shape[0] - 1, dt)
    return ext.times, ext.apply(series)


# ---------------------------------------------------------------------------
# Step 1: divergence removal


def remove_divergence(F2: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Return (Psi, U) with div U = F2.

    Psi solves Laplace(Psi) = F2 with Psi = 0 on top and d1 Psi = 0 at the
    bottom, and U starts as grad Psi.  The finite-difference Laplacian is not
    the composition of the discrete divergence and gradient, so the
    divergence defect is moved into the horizontal components of every
    nonzero mode, where it can be cancelled exactly.  The zero mode only
    has a vertical component, obtained by integrating F2 upward from
    U^1(-b) = 0 with the centered difference at interior nodes.

    ``F2`` may carry leading (time) axes.
    """
    F2 = np.asarray(F2, dtype=complex)
    psi = mode_solver(grid, 0.0, "dirichlet", "neumann").solve(F2, 0.0, 0.0)
    U = np.stack([d1(psi, grid), dh(psi, grid, 2), dh(psi, grid, 3)], axis=-4)
    err = F2 - (d1(U[..., 0, :, :, :], grid) + dh(U[..., 1, :, :, :], grid, 2) + dh(U[..., 2, :, :, :], grid, 3))
    ksq = grid.ksq[:, :, None]
    nonzero = ksq > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nonzero, err / np.where(nonzero, ksq, 1.0), 0.0)
    U[..., 1, :, :, :] -= 1j * grid.dk2[:, None, None] * scale
    U[..., 2, :, :, :] -= 1j * grid.dk3[None, :, None] * scale
    # zero-mode vertical column by leapfrog integration
    f0 = F2[..., 0, 0, :]
    h = grid.h
    col = np.zeros_like(f0)
    col[..., 1] = 0.5 * h * (f0[..., 0] + f0[..., 1])
    for j in range(1, grid.nv - 1):
        col[..., j + 1] = col[..., j - 1] + 2.0 * h * f0[..., j]
    U[..., 0, 0, 0, :] = col
    U[..., 1, 0, 0, :] = 0.0
    U[..., 2, 0, 0, :] = 0.0
    return psi, U


# ---------------------------------------------------------------------------
# Step 2: surface system and vector potential


def surface_matrix(grid: Grid) -> np.ndarray:
    """Per-mode 2x2 matrix of the surface system acting on (Phi^2, Phi^3)."""
    s2 = grid.dk2[:, None] * np.ones_like(grid.ksq)
    s3 = grid.dk3[None, :] * np.ones_like(grid.ksq)
    k2 = grid.ksq
    m = np.empty(k2.shape + (2, 2))
    m[..., 0, 0] = -(k2 + s3 * s3)
    m[..., 0, 1] = s2 * s3
    m[..., 1, 0] = s2 * s3
    m[..., 1, 1] = -(k2 + s2 * s2)
    return m


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    e = np.exp(z)
    p1 = np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zs) / zs)
    p2 = np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (np.expm1(zs) - zs) / (zs * zs))
    return e, p1, p2


def surface_heat_solve(
    F3_ext: np.ndarray, grid: Grid, dt: float, nu: float
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the surface system for Phi over an extended time grid.

    ``F3_ext`` has shape ``(n, 3, N2, N3)`` (spectral surface data).  The
    tangential rows of the free-surface stress condition, rewritten through
    the heat equation for the potential, give the per-mode system

        d/dt (Phi^2, Phi^3) = M (Phi^2, Phi^3) - (F3^3, -F3^2) / nu,

    which is integrated exactly for piecewise-linear forcing.  Returns
    Phi with shape ``(n, 2, N2, N3)`` (components 2 and 3) and the surface
    potential pi of the Helmholtz-Hodge split, Laplace_h pi = div_h Phi.
    """
    F3_ext = np.asarray(F3_ext, dtype=complex)
    n = F3_ext.shape[0]
    forcing = np.stack([-F3_ext[:, 2], F3_ext[:, 1]], axis=1) / nu
    lam, q = np.linalg.eigh(surface_matrix(grid))
    e, p1, p2 = _phi_functions(lam * dt)
    qt = np.swapaxes(q, -1, -2)

    def to_eig(v):  # v: (2, N2, N3) -> (N2, N3, 2)
        return np.einsum("xyij,jxy->xyi", qt, v)

    phi = np.zeros((n, 2) + grid.ksq.shape, dtype=complex)
    y = np.zeros(grid.ksq.shape + (2,), dtype=complex)
    for k in range(1, n):
        f0, f1 = to_eig(forcing[k - 1]), to_eig(forcing[k])
        y = e * y + dt * (p1 * f0 + p2 * (f1 - f0))
        phi[k] = np.einsum("xyij,xyj->ixy", q, y)
    ksq = grid.ksq
    divh = 1j * grid.dk2[:, None] * phi[:, 0] + 1j * grid.dk3[None, :] * phi[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        pi = np.where(ksq > 0, -divh / np.where(ksq > 0, ksq, 1.0), 0.0)
    return phi, pi


def curl_potential(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """V = curl(0, phi^2, phi^3) for spectral potentials ``phi`` (..., 2, N2, N3, nv)."""
    p2, p3 = phi[..., 0, :, :, :], phi[..., 1, :, :, :]
    return np.stack([dh(p3, grid, 2) - dh(p2, grid, 3), -d1(p3, grid), d1(p2, grid)], axis=-4)


def vector_potential_solve(
    Phi: np.ndarray,
    bottom_uh: np.ndarray,
    grid: Grid,
    dt: float,
    retain=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward-Euler heat flow for the vector potential.

    Parameters
    ----------
    Phi : ndarray, shape (n, 2, N2, N3)
        Surface values of (phi^2, phi^3) at each time level.
    bottom_uh : ndarray, shape (n, 2, N2, N3)
        Bottom trace (U^2, U^3); the Neumann data are d1 phi^2 = -U^3 and
        d1 phi^3 = U^2, so that curl phi cancels U tangentially.
    retain : iterable of int, optional
        Time levels to keep (default: all).

    Returns
    -------
    phi, V1, kept
        Potential (with a zero first component) and its curl at the kept
        levels, plus the kept indices.  phi starts from zero at level 0.
    """
    n = Phi.shape[0]
    kept = np.arange(n) if retain is None else np.asarray(sorted(set(int(k) for k in retain)))
    pos = {int(k): i for i, k in enumerate(kept)}
    solver = mode_solver(grid, 1.0 / dt, "dirichlet", "neumann")
    shape = grid.shape
    phi_out = np.zeros((kept.size, 3) + shape, dtype=complex)
    v_out = np.zeros((kept.size, 3) + shape, dtype=complex)
    cur = np.zeros((2,) + shape, dtype=complex)
    for k in range(n):
        if k > 0:
            top = Phi[k]
            bottom = np.stack([-bottom_uh[k, 1], bottom_uh[k, 0]])
            cur = solver.solve(-cur / dt, top, bottom)
        if k in pos:
            i = pos[k]
            phi_out[i, 1:] = cur
            v_out[i] = curl_potential(cur, grid)
    return phi_out, v_out, kept


def radial_root(tau: float, kabs: float) -> complex:
    """Root r of r^2 = |k|^2 + i tau with |arg r| <= pi/4."""
    mod = np.hypot(tau, kabs * kabs)
    return complex(np.sqrt(0.5 * (mod + kabs * kabs)), np.sign(tau) * np.sqrt(0.5 * (mod - kabs * kabs)))


def frequency_oracle(
    tau: float,
    sigma: tuple[float, float],
    Phi_hat: tuple[complex, complex],
    psi_bottom: complex,
    x1: np.ndarray,
    b: float,
) -> np.ndarray:
    """Time-periodic response of the potential to surface data e^{i tau t}.

    Returns the profile (3, len(x1)) of phi(t, x1) e^{-i tau t}, written with
    decaying exponentials only so large r b cannot overflow.
    """
    s2, s3 = sigma
    kabs = float(np.hypot(s2, s3))
    if tau == 0 and kabs == 0:
        raise ValueError("the zero frequency at the zero mode has no decaying response")
    r = radial_root(tau, kabs)
    x = np.asarray(x1, dtype=float)
    den = 1.0 + np.exp(-2.0 * r * b)
    top = (np.exp(-r * (x + 2.0 * b)) + np.exp(r * x)) / den
    bot = (np.exp(r * (x - b)) - np.exp(-r * (x + b))) / (r * den)
    out = np.zeros((3, x.size), dtype=complex)
    out[1] = top * Phi_hat[0] + bot * (-1j * s3 * psi_bottom)
    out[2] = top * Phi_hat[1] + bot * (1j * s2 * psi_bottom)
    return out


def oracle_relative_error(
    grid: Grid,
    tau: float,
    lattice: tuple[int, int],
    t_final: float,
    dt: float,
    Phi_hat: tuple[complex, complex] = (0.7 + 0.2j, -0.3 + 0.5j),
    psi_bottom: complex = 0.4 - 0.1j,
) -> float:
    """Relative error at t_final of the time-domain potential against the periodic response.

    One horizontal mode is driven from rest by surface data Phi_hat e^{i tau t}
    and bottom data i k psi_bottom e^{i tau t}; after the transient has decayed
    the profile is compared with :func:`frequency_oracle`.
    """
    n2, n3 = grid.config.modes
    i2, i3 = lattice[0] % n2, lattice[1] % n3
    s2, s3 = float(grid.k2[i2]), float(grid.k3[i3])
    n = int(round(t_final / dt)) + 1
    wave = np.exp(1j * tau * dt * np.arange(n))
    Phi = np.zeros((n, 2) + grid.ksq.shape, dtype=complex)
    bottom = np.zeros_like(Phi)
    Phi[:, 0, i2, i3] = Phi_hat[0] * wave
    Phi[:, 1, i2, i3] = Phi_hat[1] * wave
    bottom[:, 0, i2, i3] = 1j * s2 * psi_bottom * wave
    bottom[:, 1, i2, i3] = 1j * s3 * psi_bottom * wave
    phi, _, _ = vector_potential_solve(Phi, bottom, grid, dt, retain=[n - 1])
    numeric = phi[0, :, i2, i3, :]
    exact = frequency_oracle(tau, (s2, s3), Phi_hat, psi_bottom, grid.x1, grid.depth) * wave[-1]
    return float(np.linalg.norm(numeric - exact) / np.linalg.norm(exact))


# ---------------------------------------------------------------------------
# Bottom correction and closure


def bottom_correction(V1: np.ndarray, grid: Grid, cutoffs: Cutoffs) -> np.ndarray:
    """Divergence-free field cancelling the bottom normal trace of ``V1``.

    V2^1 = -chi_b(x1) V1^1(-b): the bottom trace is carried up with the
    cutoff so that d1 V2^1 vanishes in a neighbourhood of the bottom.  The
    horizontal part comes from the potential problem

        d1^2 phi - |k|^2 phi = -d1 V2^1,  d1 phi(0) = 0,  phi(-b) = 0,

    as V2^beta = i k_beta (phi - d1^2 phi / |k|^2), which makes V2 divergence
    free mode by mode.  The zero mode of V2 vanishes.
    """
    V1 = np.asarray(V1)
    trace = V1[..., 0, :, :, 0]
    v21 = -trace[..., None] * cutoffs.chi_b
    rhs = -d1(v21, grid)
    phi = mode_solver(grid, 0.0, "neumann", "dirichlet").solve(rhs, 0.0, 0.0)
    ksq = grid.ksq[:, :, None]
    nz = ksq > 0
    safe = np.where(nz, ksq, 1.0)
    second = dd1(phi, grid)
    # the ODE gives d1^2 phi at the boundary nodes, where dd1 is one-sided
    second[..., 0] = ksq[..., 0] * phi[..., 0] + rhs[..., 0]
    second[..., -1] = ksq[..., 0] * phi[..., -1] + rhs[..., -1]
    core = np.where(nz, phi - second / safe, 0.0)
    V2 = np.empty(V1.shape, dtype=complex)
    V2[..., 0, :, :, :] = np.where(nz, v21, 0.0)
    V2[..., 1, :, :, :] = 1j * grid.dk2[:, None, None] * core
    V2[..., 2, :, :, :] = 1j * grid.dk3[None, :, None] * core
    return V2


def closure_profile(grid: Grid, cutoffs: Cutoffs) -> tuple[np.ndarray, float]:
    """theta = x1^2 chi_f / 2 (zero on the three bottom nodes) and its top curvature."""
    theta = 0.5 * grid.x1**2 * cutoffs.chi_f
    theta[:3] = 0.0
    kappa = float((grid.d1 @ (grid.d1 @ theta))[-1])
    return theta, kappa


def tangential_defect(V: np.ndarray, F3t: np.ndarray, grid: Grid, nu: float) -> np.ndarray:
    """Tangential stress rows -nu(d1 V^beta + d_beta V^1) - F3~^beta on top; shape (..., 2, N2, N3)."""
    dv = d1(V[..., 1:, :, :, :], grid)[..., -1]
    v1 = V[..., 0, :, :, -1]
    r2 = -nu * (dv[..., 0, :, :] + dh(v1, grid, 2, surface=True)) - F3t[..., 1, :, :]
    r3 = -nu * (dv[..., 1, :, :] + dh(v1, grid, 3, surface=True)) - F3t[..., 2, :, :]
    return np.stack([r2, r3], axis=-3)


def closure(V: np.ndarray, F3t: np.ndarray, grid: Grid, nu: float, cutoffs: Cutoffs):
    """Divergence-free field removing the tangential stress defect of ``V``.

    Returns (Vc, defect) where Vc = curl(0, c2 theta, c3 theta) vanishes at
    the bottom and at the top, so it only changes the tangential stress.
    """
    theta, kappa = closure_profile(grid, cutoffs)
    R = tangential_defect(V, F3t, grid, nu)
    c2 = R[..., 1, :, :] / (nu * kappa)
    c3 = -R[..., 0, :, :] / (nu * kappa)
    pot = np.stack([c2[..., None] * theta, c3[..., None] * theta], axis=-4)
    return curl_potential(pot, grid), R


# ---------------------------------------------------------------------------
# Assembly


@dataclass(eq=False)
class CorrectorBundle:
    """Corrector fields on the time levels 0..K and homogenized Stokes data."""

    times: np.ndarray
    Psi: np.ndarray
    U: np.ndarray
    F3_tilde: np.ndarray
    Phi: np.ndarray
    pi_surface: np.ndarray
    phi: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    V: np.ndarray
    P1: np.ndarray
    f0_tilde: np.ndarray
    f1_tilde: np.ndarray
    W0: np.ndarray
    closure_defect: np.ndarray
    residuals: dict = field(default_factory=dict)


def corrector_residuals(bundle: CorrectorBundle, F2: np.ndarray, grid: Grid, nu: float) -> dict:
    """Max-norm residuals of the corrector conditions over all retained times.

    The divergence is measured at interior nodes: the zero mode of U is
    integrated with centred differences, which leave the one-sided boundary
    rows unconstrained.
    """
    from .grid import to_physical

    UV = bundle.U + bundle.V
    divergence = to_physical(div(UV, grid) - F2)[..., 1:-1]
    top = tangential_defect(bundle.V, bundle.F3_tilde, grid, nu)
    bottom = bundle.V[..., 0] + np.concatenate([np.zeros_like(bundle.U[:, :1, ..., 0]), bundle.U[:, 1:, ..., 0]], axis=1)
    p1_trace = bundle.P1[..., -1] - (2.0 * nu * d1(bundle.V[:, 0], grid)[..., -1] + bundle.F3_tilde[:, 0])
    u_bottom = bundle.U[:, 0, ..., 0]
    return {
        "divergence": float(np.max(np.abs(divergence))),
        "top_stress": float(np.max(np.abs(to_physical(top, (-2, -1))))),
        "bottom_trace": float(np.max(np.abs(to_physical(bottom, (-2, -1))))),
        "U1_bottom": float(np.max(np.abs(to_physical(u_bottom, (-2, -1))))),
        "P1_trace": float(np.max(np.abs(p1_trace))),
        "closure_defect": float(np.max(np.abs(to_physical(bundle.closure_defect, (-2, -1))))),
    }


def assemble_corrector(
    F1: np.ndarray,
    F2: np.ndarray,
    F3: np.ndarray,
    u0: np.ndarray,
    grid: Grid,
    dt: float,
    nu: float,
) -> CorrectorBundle:
    """Build U, V, P1 and the homogenized data (f0~, f1~, W0).

    Parameters
    ----------
    F1 : ndarray, shape (K+1, 3, N2, N3, nv)
    F2 : ndarray, shape (K+1, N2, N3, nv)
    F3 : ndarray, shape (K+1, 3, N2, N3)
        Spectral data on t_k = k dt.
    u0 : ndarray, shape (3, N2, N3, nv)
        Initial velocity.

    Notes
    -----
    Time derivatives of U and V are backward differences, matching the
    backward-Euler Stokes step; the level before 0 comes from the time
    extension.
    """
    F1, F2, F3 = (np.asarray(a, dtype=complex) for a in (F1, F2, F3))
    n = F2.shape[0]
    if F1.shape[0] != n or F3.shape[0] != n:
        raise ValueError("grid mismatch: F1, F2, F3 must share the time grid")
    if F1.shape[1:] != (3,) + grid.shape or F2.shape[1:] != grid.shape:
        raise ValueError("grid mismatch: field shapes do not match the grid")
    K = n - 1
    ext = TimeExtension(K, dt)
    cut = make_cutoffs(grid)

    psi, U = remove_divergence(F2, grid)
    F3t = F3 - np.stack([stress_top(U[k], None, grid, nu) for k in range(n)])

    F3t_ext = ext.apply(F3t)
    ub_ext = ext.apply(U[:, 1:, ..., 0])
    Phi, pi = surface_heat_solve(F3t_ext, grid, dt, nu)
    start = ext.position(0)
    phi, V1, _ = vector_potential_solve(Phi, ub_ext, grid, dt, retain=range(start - 1, start + n))
    V2 = bottom_correction(V1, grid, cut)
    F3t_all = np.concatenate([F3t_ext[start - 1 : start], F3t])
    Vc, defect = closure(V1 + V2, F3t_all, grid, nu, cut)
    V_all = V1 + V2 + Vc
    V_prev, V = V_all[0], V_all[1:]
    U_prev = ext.sample(U, -1)

    P1 = 2.0 * nu * d1(V[:, 0], grid) + harmonic_extension(F3t[:, 0], grid)
    f0 = U[:, 0, ..., -1] + V[:, 0, ..., -1]
    dU = np.diff(np.concatenate([U_prev[None], U]), axis=0) / dt
    dV = np.diff(np.concatenate([V_prev[None], V]), axis=0) / dt
    f1 = np.empty_like(F1)
    for k in range(n):
        UV = U[k] + V[k]
        f1[k] = F1[k] - dU[k] - dV[k] + nu * div_sym_grad(UV, grid) - grad(P1[k], grid)
    W0 = np.asarray(u0, dtype=complex) - U[0] - V[0]

    bundle = CorrectorBundle(
        times=np.arange(n) * dt,
        Psi=psi,
        U=U,
        F3_tilde=F3t,
        Phi=Phi[start : start + n],
        pi_surface=pi[start : start + n],
        phi=phi[1:],
        V1=V1[1:],
        V2=V2[1:],
        V=V,
        P1=P1,
        f0_tilde=f0,
        f1_tilde=f1,
        W0=W0,
        closure_defect=defect[1:],
    )
    bundle.residuals = corrector_residuals(bundle, F2, grid, nu)
    return bundle
