"""
Anisotropic Sobolev norms, the trajectory norm and energy functionals.

All inputs are spectral.  Horizontal integrals use Parseval (forward
normalized coefficients, so a factor of the torus area), vertical integrals
the trapezoid rule.  The horizontal weight <k>^r = (1 + |k|^2)^(r/2) uses
the exact lattice wavenumbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .elliptic import harmonic_extension
from .grid import Grid, bracket, d1, dd1, dh, grad_vector

Space = Literal["L2", "H1", "H2", "surface"]


def _volume_sq(f: np.ndarray, grid: Grid) -> float:
    return float(grid.area * np.sum(np.abs(f) ** 2 * grid.weights))


def anisotropic_norm(f_hat: np.ndarray, grid: Grid, s_exp: float, space: Space = "L2") -> float:
    """Norm of <grad_h>^s_exp f in L2, H1 or H2 of the slab, or H^s_exp of the surface.

    Vector or tensor data (any leading axes) are summed componentwise.  For
    ``space="surface"`` the data have no vertical axis and the result is
    (area * sum <k>^(2 s_exp) |f_k|^2)^(1/2).
    """
    f_hat = np.asarray(f_hat)
    w = bracket(grid, s_exp)
    if space == "surface":
        return float(np.sqrt(grid.area * np.sum(np.abs(f_hat * w) ** 2)))
    g = f_hat * w[:, :, None]
    total = _volume_sq(g, grid)
    if space == "L2":
        return float(np.sqrt(total))
    ksq = grid.ksq[:, :, None]
    dg = d1(g, grid)
    total += _volume_sq(dg, grid) + float(grid.area * np.sum(ksq * np.abs(g) ** 2 * grid.weights))
    if space == "H1":
        return float(np.sqrt(total))
    if space == "H2":
        total += _volume_sq(dd1(g, grid), grid)
        total += float(grid.area * np.sum((2.0 * ksq * np.abs(dg) ** 2 + ksq * ksq * np.abs(g) ** 2) * grid.weights))
        return float(np.sqrt(total))
    raise ValueError(f"unknown space {space!r}")


def xt_terms(eta1: np.ndarray, v: np.ndarray, q: np.ndarray, grid: Grid, s: float, dt: float) -> dict:
    """The five pieces of the trajectory norm.

    Supremum norms run over all time levels, time integrals over levels
    1..K with the rectangle rule (consistent with backward Euler); v_t is a
    backward difference.
    """
    n = v.shape[0]
    if n == 0:
        return dict.fromkeys(("eta_sup_Hs", "v_sup_H1", "v_L2_H2", "vt_L2_L2", "q_L2_H1"), 0.0)
    eta_sup = max(anisotropic_norm(eta1[k], grid, s, "surface") for k in range(n))
    v_sup = max(anisotropic_norm(v[k], grid, s - 1, "H1") for k in range(n))
    v_h2 = np.sqrt(dt * sum(anisotropic_norm(v[k], grid, s - 1, "H2") ** 2 for k in range(1, n)))
    vt = np.sqrt(dt * sum(anisotropic_norm((v[k] - v[k - 1]) / dt, grid, s - 1, "L2") ** 2 for k in range(1, n)))
    q_h1 = np.sqrt(dt * sum(anisotropic_norm(q[k], grid, s - 1, "H1") ** 2 for k in range(1, n)))
    return {
        "eta_sup_Hs": float(eta_sup),
        "v_sup_H1": float(v_sup),
        "v_L2_H2": float(v_h2),
        "vt_L2_L2": float(vt),
        "q_L2_H1": float(q_h1),
    }


LEDGER_NAMES = ("eta_Hs", "v_H1", "v_H2", "vt_L2", "q_H1")


def xt_series(eta1: np.ndarray, v: np.ndarray, q: np.ndarray, grid: Grid, s: float, dt: float) -> dict:
    """Per-time values of the quantities whose sup or L2-in-time form the trajectory norm.

    The backward difference v_t is zero at the first level.
    """
    n = v.shape[0]
    out = {name: np.zeros(n) for name in LEDGER_NAMES}
    for k in range(n):
        out["eta_Hs"][k] = anisotropic_norm(eta1[k], grid, s, "surface")
        out["v_H1"][k] = anisotropic_norm(v[k], grid, s - 1, "H1")
        out["v_H2"][k] = anisotropic_norm(v[k], grid, s - 1, "H2")
        out["q_H1"][k] = anisotropic_norm(q[k], grid, s - 1, "H1")
        if k > 0:
            out["vt_L2"][k] = anisotropic_norm((v[k] - v[k - 1]) / dt, grid, s - 1, "L2")
    return out


def xt_norm(traj, grid: Grid, s: float, dt: float | None = None) -> float:
    """Trajectory norm of an object with ``eta1``, ``v``, ``q`` (and ``dt``) series."""
    step = dt if dt is not None else traj.dt
    return float(sum(xt_terms(traj.eta1, traj.v, traj.q, grid, s, step).values()))


# ---------------------------------------------------------------------------
# Energy functionals for the homogeneous Stokes problem


def _inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(grid.area * np.real(np.sum(np.conj(a) * b * grid.weights)))


def energy_functionals(
    W: np.ndarray,
    eta1: np.ndarray,
    Q: np.ndarray,
    grid: Grid,
    nu: float,
    g: float,
    s: float,
    kappa: float,
    W_prev: np.ndarray | None = None,
    dt: float | None = None,
    c0: float = 1.0,
) -> dict:
    """E_tilde, E_bar and D_bar for one Stokes state (squared norms throughout).

    E_tilde = ||L grad W||^2 + 2 ||L d1 W^1||^2
              + (2/nu) (L W, g L grad H(eta)) + 2 (L d1 W^h, L grad_h W^1)
    E_bar   = ||<grad_h>^s W||^2 + ||eta||_{H^s}^2 + kappa nu E_tilde
              + kappa^2 ||grad_h eta||_{H^(s-1)}^2
    D_bar   = (3 nu / 2) ||<grad_h>^s D W||^2 + kappa ||L W_t||^2
              + kappa^2 c0 ||L (d1^2 W^h, Q, grad Q)||^2
    with L = <grad_h>^(s-1).  The W_t term is dropped without a previous state.
    """
    lam = bracket(grid, s - 1)[:, :, None]
    LW = W * lam
    gW = grad_vector(LW, grid)
    hx = harmonic_extension(eta1, grid) * lam
    grad_h = np.stack([d1(hx, grid), dh(hx, grid, 2), dh(hx, grid, 3)])
    cross_g = _inner(LW, g * grad_h, grid)
    d1wh = d1(LW[1:], grid)
    gradh_w1 = np.stack([dh(LW[0], grid, 2), dh(LW[0], grid, 3)])
    e_tilde = (
        _inner(gW, gW, grid)
        + 2.0 * _inner(gW[0, 0], gW[0, 0], grid)
        + (2.0 / nu) * cross_g
        + 2.0 * _inner(d1wh, gradh_w1, grid)
    )
    ws = W * bracket(grid, s)[:, :, None]
    eta_hs = anisotropic_norm(eta1, grid, s, "surface") ** 2
    gh_eta = np.stack([dh(eta1, grid, 2, surface=True), dh(eta1, grid, 3, surface=True)])
    e_bar = _inner(ws, ws, grid) + eta_hs + kappa * nu * e_tilde + kappa**2 * anisotropic_norm(gh_eta, grid, s - 1, "surface") ** 2
    gws = grad_vector(ws, grid)
    sym = gws + np.swapaxes(gws, 0, 1)
    d_bar = 1.5 * nu * _inner(sym, sym, grid)
    if W_prev is not None and dt is not None:
        wt = (W - W_prev) / dt * lam
        d_bar += kappa * _inner(wt, wt, grid)
    LQ = Q * lam
    pieces = [dd1(LW[1:], grid), LQ, d1(LQ, grid), dh(LQ, grid, 2), dh(LQ, grid, 3)]
    d_bar += kappa**2 * c0 * sum(_inner(p, p, grid) for p in pieces)
    return {"E_tilde": float(e_tilde), "E_bar": float(e_bar), "D_bar": float(d_bar)}


def ebar_coercivity(W: np.ndarray, eta1: np.ndarray, grid: Grid, nu: float, g: float, s: float, kappa: float) -> float:
    """Ratio E_bar / (||L W||_{H1}^2 + ||eta||_{H^s}^2) for one state."""
    q0 = np.zeros(grid.shape, dtype=complex)
    e_bar = energy_functionals(W, eta1, q0, grid, nu, g, s, kappa)["E_bar"]
    base = anisotropic_norm(W, grid, s - 1, "H1") ** 2 + anisotropic_norm(eta1, grid, s, "surface") ** 2
    return e_bar / base if base > 0 else np.inf


def ebar_positivity(grid: Grid, nu: float, g: float, s: float, kappa: float, rng: np.random.Generator, n_states: int = 8, dt: float = 0.01) -> float:
    """Smallest coercivity ratio over random admissible Stokes states."""
    from .stokes import admissible_state

    ratios = []
    for _ in range(n_states):
        st = admissible_state(grid, rng, nu, g, dt)
        ratios.append(ebar_coercivity(st.W, st.eta1, grid, nu, g, s, kappa))
    return float(min(ratios))


# ---------------------------------------------------------------------------
# Solution-estimate report


@dataclass
class EnergyReport:
    sup_terms: float
    dissipation: float
    data: float
    ratio: float
    ebar_min_ratio: float | None = None
    ebar_positive: bool | None = None
    extras: dict = field(default_factory=dict)


def _grad_tensor_h1_sq(xi: np.ndarray, grid: Grid, s_exp: float) -> float:
    return anisotropic_norm(grad_vector(xi, grid), grid, s_exp, "H1") ** 2


def energy_report(traj, xi0: np.ndarray, v0: np.ndarray, grid: Grid, s: float, dt: float | None = None,
                  kappa: float | None = None, nu: float | None = None, g: float | None = None,
                  rng: np.random.Generator | None = None) -> EnergyReport:
    """Left and right sides of the a priori solution estimate and their ratio.

    LHS = sup_t (||L(grad xi, v)||_{H1}^2 + ||xi^1||_{H^s}^2) + int ||L(grad v, q)||_{H1}^2 dt,
    RHS = ||L(grad xi0, v0)||_{H1}^2 + ||xi0^1||_{H^s}^2, with L = <grad_h>^(s-1).

    If ``kappa``, ``nu``, ``g`` and ``rng`` are given, the positivity of
    E_bar on random admissible states is measured as well.
    """
    step = dt if dt is not None else traj.dt
    n = traj.v.shape[0]
    sup = 0.0
    for k in range(n):
        val = _grad_tensor_h1_sq(traj.xi[k], grid, s - 1) + anisotropic_norm(traj.v[k], grid, s - 1, "H1") ** 2
        val += anisotropic_norm(traj.eta1[k], grid, s, "surface") ** 2
        sup = max(sup, val)
    diss = 0.0
    for k in range(1, n):
        diss += step * (_grad_tensor_h1_sq(traj.v[k], grid, s - 1) + anisotropic_norm(traj.q[k], grid, s - 1, "H1") ** 2)
    data = _grad_tensor_h1_sq(xi0, grid, s - 1) + anisotropic_norm(v0, grid, s - 1, "H1") ** 2
    data += anisotropic_norm(xi0[0, ..., -1], grid, s, "surface") ** 2
    lhs = sup + diss
    ratio = lhs / data if data > 0 else (0.0 if lhs == 0 else np.inf)
    rep = EnergyReport(sup_terms=sup, dissipation=diss, data=data, ratio=float(ratio))
    if kappa is not None and nu is not None and g is not None and rng is not None:
        rep.ebar_min_ratio = ebar_positivity(grid, nu, g, s, kappa, rng)
        rep.ebar_positive = rep.ebar_min_ratio > 0
    return rep
