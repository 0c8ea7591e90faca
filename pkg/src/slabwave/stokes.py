"""
Free-boundary Stokes evolution with homogeneous boundary data.

Unknowns are the velocity W, the pressure Q and the surface elevation
xi (= xi^1 on the top surface):

    W_t - nu div D(W) + grad Q = f1,   div W = 0,
    (Q - g xi) n0 - nu D(W) n0 = 0 on top,   W = 0 at the bottom,
    xi_t = W^1|top + f0.

Each horizontal mode is advanced by one backward-Euler saddle-point solve.
Writing the horizontal velocity in the frame (k/|k|, k_perp/|k|) splits off
the perpendicular part, which obeys a scalar heat equation, and leaves a
coupled system in (W^1, W_par, Q, xi) whose coefficients depend on |k| only,
so all modes on one lattice circle share one LU factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .elliptic import SingularModeError, harmonic_extension, mode_solver, solve_poisson
from .grid import Grid, d1, dh, div, grad, grad_vector, pressure_stabilization_matrix, to_physical


@dataclass(frozen=True, eq=False)
class StokesState:
    """Spectral surface elevation, velocity and pressure."""

    eta1: np.ndarray
    W: np.ndarray
    Q: np.ndarray

    @staticmethod
    def zeros(grid: Grid) -> "StokesState":
        return StokesState(
            eta1=np.zeros(grid.ksq.shape, dtype=complex),
            W=np.zeros((3,) + grid.shape, dtype=complex),
            Q=np.zeros(grid.shape, dtype=complex),
        )


@dataclass(frozen=True, eq=False)
class PressureParts:
    pi1: np.ndarray
    pi2: np.ndarray


@dataclass(frozen=True, eq=False)
class GoodUnknowns:
    GQ: np.ndarray
    GW: np.ndarray


# ---------------------------------------------------------------------------
# Projection and pressure diagnostics


def leray_project(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Project onto divergence-free fields with zero bottom normal trace.

    For each mode with |k| > 0, theta solves (D1 D1 - |k|^2) theta = div w at
    interior nodes with d1 theta = w^1 at the bottom and theta = 0 on top,
    where D1 is the centred first difference used by ``div`` and ``grad``.
    The result w - grad theta then has zero divergence at interior nodes, a
    discrete gradient with theta = 0 on top is removed exactly and the map
    is idempotent.  Modes with |k| = 0 only lose their vertical component.
    """
    w = np.asarray(w, dtype=complex)
    rhs = div(w, grid)
    rhs[..., 0] = w[0, ..., 0]
    rhs[..., -1] = 0.0
    theta = np.zeros(grid.shape, dtype=complex)
    flat_rhs = rhs.reshape(-1, grid.nv)
    flat_theta = theta.reshape(-1, grid.nv)
    for ksq, idx in _ksq_groups(grid):
        if ksq == 0.0:
            continue
        flat_theta[idx] = lu_solve(_leray_operator(grid, ksq), flat_rhs[idx].T).T
    out = w - grad(theta, grid)
    out[0][grid.ksq == 0.0] = 0.0
    return out


def _ksq_groups(grid: Grid) -> list[tuple[float, np.ndarray]]:
    """Flat mode indices grouped by |k|^2."""
    key = ("ksq_groups",)
    if key not in grid.cache:
        flat = grid.ksq.reshape(-1)
        values, inverse = np.unique(flat, return_inverse=True)
        grid.cache[key] = [(float(v), np.flatnonzero(inverse == i)) for i, v in enumerate(values)]
    return grid.cache[key]


def _leray_operator(grid: Grid, ksq: float):
    """LU factors of the composed vertical operator with projection boundary rows."""
    key = ("leray_operator", ksq)
    if key not in grid.cache:
        mat = grid.d1 @ grid.d1 - ksq * np.eye(grid.nv)
        mat[0] = grid.d1[0]
        mat[-1] = 0.0
        mat[-1, -1] = 1.0
        grid.cache[key] = lu_factor(mat)
    return grid.cache[key]


def pressure_harmonics(state: StokesState, grid: Grid, nu: float, g: float) -> PressureParts:
    """Harmonic pressures with top values g xi and -2 nu div_h W^h, zero bottom flux."""
    zero = np.zeros(grid.shape, dtype=complex)
    top2 = -2.0 * nu * (dh(state.W[1], grid, 2) + dh(state.W[2], grid, 3))[..., -1]
    pi1 = solve_poisson(zero, grid, "mixed-top-dirichlet", g * state.eta1, 0.0)
    pi2 = solve_poisson(zero, grid, "mixed-top-dirichlet", top2, 0.0)
    return PressureParts(pi1=pi1, pi2=pi2)


def good_unknowns(state: StokesState, grid: Grid, nu: float, g: float) -> GoodUnknowns:
    """GQ = Q - g H(xi) + 2 nu div_h W^h and GW^beta = d1 W^beta + d_beta W^1."""
    W = state.W
    gq = state.Q - g * harmonic_extension(state.eta1, grid) + 2.0 * nu * (dh(W[1], grid, 2) + dh(W[2], grid, 3))
    gw = np.stack([d1(W[1], grid) + dh(W[0], grid, 2), d1(W[2], grid) + dh(W[0], grid, 3)])
    return GoodUnknowns(GQ=gq, GW=gw)


# ---------------------------------------------------------------------------
# Mode systems


def _rotation(grid: Grid):
    """Unit vectors (k/|k|) per mode; modes with |k| = 0 use (e2, e3)."""
    kabs = grid.kabs
    nz = kabs > 0
    c2 = np.where(nz, grid.dk2[:, None] / np.where(nz, kabs, 1.0), 1.0)
    c3 = np.where(nz, grid.dk3[None, :] / np.where(nz, kabs, 1.0), 0.0)
    return c2, c3


def mode_matrix(grid: Grid, kabs: float, nu: float, g: float, dt: float | None) -> np.ndarray:
    """Coupled system for (W^1, W_par, Q, xi) at one |k|.

    ``dt = None`` gives the steady system, where the elevation row becomes
    W^1|top = -f0.
    """
    nv = grid.nv
    D1, D2 = grid.d1, grid.d2
    I = np.eye(nv)
    k, k2 = kabs, kabs * kabs
    r = 0.0 if dt is None else 1.0 / dt
    n = 3 * nv + 1
    m = np.zeros((n, n), dtype=complex)
    w1, wp, q, xi = slice(0, nv), slice(nv, 2 * nv), slice(2 * nv, 3 * nv), 3 * nv
    # vertical momentum
    m[w1, w1] = r * I - nu * (2.0 * D2 - k2 * I)
    m[w1, wp] = -nu * 1j * k * D1
    m[w1, q] = D1
    # parallel momentum
    m[wp, wp] = r * I - nu * (D2 - 2.0 * k2 * I)
    m[wp, w1] = -nu * 1j * k * D1
    m[wp, q] = 1j * k * I
    # continuity at every node, stabilized at interior nodes of nonzero modes
    m[q, w1] = D1
    m[q, wp] = 1j * k * I
    if k > 0:
        m[q, q] = -pressure_stabilization_matrix(nv, grid.h)
    bottom, top = 0, nv - 1
    m[bottom] = 0.0
    m[bottom, bottom] = 1.0
    m[nv + bottom] = 0.0
    m[nv + bottom, nv + bottom] = 1.0
    # top tangential stress
    m[nv + top] = 0.0
    m[nv + top, wp] = -nu * D1[top]
    m[nv + top, top] = -nu * 1j * k
    # top normal stress
    m[top] = 0.0
    m[top, 2 * nv + top] = 1.0
    m[top, xi] = -g
    m[top, w1] -= 2.0 * nu * D1[top]
    # elevation
    if dt is None:
        m[xi, top] = 1.0
    else:
        m[xi, xi] = 1.0
        m[xi, top] = -dt
    if k == 0:
        # div W = 0 and W^1(-b) = 0 already force W^1 = 0; the bottom
        # continuity row is redundant and is traded for vertical momentum
        row = 2 * nv + bottom
        m[row] = 0.0
        m[row, w1] = r * I[bottom] - nu * 2.0 * D2[bottom]
        m[row, q] = D1[bottom]
        if dt is None:
            raise SingularModeError("steady system at |k| = 0 leaves the mean elevation undetermined")
    return m


class StokesStepper:
    """Backward-Euler stepper with factorizations cached per |k|."""

    def __init__(self, grid: Grid, nu: float, g: float, dt: float | None):
        if dt is not None and not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.nu, self.g, self.dt = grid, nu, g, dt
        kabs = grid.kabs
        values, inverse = np.unique(np.round(kabs, 12), return_inverse=True)
        self._groups = []
        flat = inverse.reshape(-1)
        for gi, k in enumerate(values):
            idx = np.flatnonzero(flat == gi)
            try:
                lu = lu_factor(mode_matrix(grid, float(k), nu, g, dt), check_finite=True)
            except SingularModeError as exc:
                if dt is None and k == 0:
                    # steady |k| = 0 modes (mean and Nyquist) are solvable only without forcing
                    self._groups.append((idx, None, str(exc)))
                    continue
                raise SingularModeError(f"{exc} (modes {idx[:4].tolist()})") from exc
            if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
                raise SingularModeError(f"singular mode system at |k| = {k:.6g} (modes {idx[:4].tolist()})")
            self._groups.append((idx, lu, ""))
        self._c2, self._c3 = _rotation(grid)
        if dt is not None:
            self._perp = mode_solver(grid, 1.0 / (nu * dt), "neumann", "dirichlet")

    def _split(self, v):
        c2, c3 = self._c2[..., None], self._c3[..., None]
        return c2 * v[1] + c3 * v[2], -c3 * v[1] + c2 * v[2]

    def _join(self, par, perp):
        c2, c3 = self._c2[..., None], self._c3[..., None]
        return c2 * par - c3 * perp, c3 * par + c2 * perp

    def step(self, state: StokesState, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray | None = None) -> StokesState:
        """Advance one step with forcing sampled at the new time level.

        ``f2`` is optional continuity data at interior nodes of nonzero modes:
        div W - S Q = f2 there.
        """
        grid, nu, dt = self.grid, self.nu, self.dt
        nv = grid.nv
        r = 0.0 if dt is None else 1.0 / dt
        f1 = np.asarray(f1, dtype=complex)
        fpar, fperp = self._split(f1)
        wpar, wperp = self._split(state.W)
        rhs = np.zeros(grid.ksq.shape + (3 * nv + 1,), dtype=complex)
        rhs[..., :nv] = f1[0] + r * state.W[0]
        rhs[..., nv : 2 * nv] = fpar + r * wpar
        rhs[..., 0] = 0.0
        rhs[..., nv] = 0.0
        rhs[..., nv - 1] = 0.0
        rhs[..., 2 * nv - 1] = 0.0
        if dt is None:
            rhs[..., 3 * nv] = -f0
        else:
            rhs[..., 3 * nv] = state.eta1 + dt * f0
        zero = grid.kabs == 0
        if f2 is not None:
            rhs[..., 2 * nv + 1 : 3 * nv - 1] = np.where(zero[..., None], 0.0, np.asarray(f2)[..., 1:-1])
        # zero-|k| modes use their bottom continuity row for vertical momentum
        rhs[..., 2 * nv] = np.where(zero, f1[0, ..., 0] + r * state.W[0, ..., 0], 0.0)
        flat = rhs.reshape(-1, 3 * nv + 1)
        sol = np.empty_like(flat)
        for idx, lu, why in self._groups:
            if lu is None:
                if np.any(flat[idx] != 0):
                    raise SingularModeError(f"{why} (forced modes {idx[:4].tolist()})")
                sol[idx] = 0.0
                continue
            sol[idx] = lu_solve(lu, flat[idx].T).T
        sol = sol.reshape(rhs.shape)
        w1, par, q = sol[..., :nv], sol[..., nv : 2 * nv], sol[..., 2 * nv : 3 * nv]
        if dt is None:
            perp = mode_solver(grid, 0.0, "neumann", "dirichlet").solve(-fperp / nu, 0.0, 0.0)
        else:
            perp = self._perp.solve(-(fperp + r * wperp) / nu, 0.0, 0.0)
        w2, w3 = self._join(par, perp)
        return StokesState(eta1=sol[..., 3 * nv], W=np.stack([w1, w2, w3]), Q=q)


def stokes_step(
    state: StokesState,
    f0_tilde: np.ndarray,
    f1_tilde: np.ndarray,
    dt: float,
    grid: Grid,
    nu: float,
    g: float,
    f2_tilde: np.ndarray | None = None,
) -> StokesState:
    """One backward-Euler step; factorizations are cached on the grid."""
    key = ("stokes", float(dt), float(nu), float(g))
    if key not in grid.cache:
        grid.cache[key] = StokesStepper(grid, nu, g, dt)
    return grid.cache[key].step(state, f0_tilde, f1_tilde, f2_tilde)


def steady_solve(f0: np.ndarray, f1: np.ndarray, grid: Grid, nu: float, g: float) -> StokesState:
    """Steady state of the mode systems for time-independent forcing.

    Modes with |k| = 0 (the mean and, on even grids, the Nyquist modes) have
    no steady state under forcing; they must be unforced and return zero.
    """
    return StokesStepper(grid, nu, g, None).step(StokesState.zeros(grid), f0, f1)


def admissible_state(grid: Grid, rng: np.random.Generator, nu: float, g: float, dt: float, amplitude: float = 1.0) -> StokesState:
    """Random state satisfying every discrete constraint.

    Band-limited random velocity and elevation are pushed through one
    unforced step, whose output lies in the constraint set of the scheme.
    """
    from .grid import to_spectral, truncate

    w = truncate(to_spectral(rng.standard_normal((3,) + grid.shape)), grid)
    eta = truncate(to_spectral(rng.standard_normal(grid.ksq.shape), (-2, -1)), grid, (-2, -1))
    seed = StokesState(eta1=amplitude * eta, W=amplitude * w, Q=np.zeros(grid.shape, dtype=complex))
    zero_f1 = np.zeros((3,) + grid.shape, dtype=complex)
    return stokes_step(seed, np.zeros(grid.ksq.shape, dtype=complex), zero_f1, dt, grid, nu, g)


# ---------------------------------------------------------------------------
# Energy diagnostics


def volume_inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Re integral of conj(a) b over the slab for spectral data (any leading axes)."""
    return float(grid.area * np.real(np.sum(np.conj(a) * b * grid.weights)))


def surface_inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(grid.area * np.real(np.sum(np.conj(a) * b)))


def stokes_energy(state: StokesState, grid: Grid, g: float) -> float:
    return volume_inner(state.W, state.W, grid) + g * surface_inner(state.eta1, state.eta1, grid)


def sym_grad_norm_sq(W: np.ndarray, grid: Grid) -> float:
    gv = grad_vector(W, grid)
    sym = gv + np.swapaxes(gv, 0, 1)
    return volume_inner(sym, sym, grid)


def energy_identity_check(history: list[StokesState], grid: Grid, nu: float, g: float, dt: float) -> dict:
    """Discrete energy balance along an unforced run.

    Reports the energies, their increments, the largest value of
    (E_k - E_{k-1}) / dt + (nu / 2) ||D W_k||^2 (nonpositive for a
    dissipative step) and the top trace of the good unknown GW.
    """
    if len(history) < 2:
        raise ValueError("need at least two states")
    energy = np.array([stokes_energy(s, grid, g) for s in history])
    incr = np.diff(energy)
    balance = np.array(
        [incr[k - 1] / dt + 0.5 * nu * sym_grad_norm_sq(history[k].W, grid) for k in range(1, len(history))]
    )
    gw_top = max(float(np.max(np.abs(to_physical(good_unknowns(s, grid, nu, g).GW[..., -1], (-2, -1))))) for s in history[1:])
    return {
        "energy": energy,
        "increments": incr,
        "max_increment": float(np.max(incr)),
        "max_balance": float(np.max(balance)),
        "gw_top": gw_top,
    }
