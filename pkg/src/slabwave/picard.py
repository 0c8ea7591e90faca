"""
Linear free-boundary solves and the nonlinear fixed-point iteration.

``linear_solve`` composes divergence removal, boundary homogenization and
the homogeneous Stokes evolution into a solver for

    xi_t = u^1 on top,   u_t - nu div D(u) + grad p = F1,   div u = F2,
    (p - g xi) n0 - nu D(u) n0 = F3 on top,   u = 0 at the bottom.

``picard_solve`` freezes the flow map and the velocity of the previous
iterate in (F1, F2, F3), solves the linear problem, integrates the
displacement and repeats until the trajectory norm of the update is below
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .btensors import assemble_rhs, assemble_tensors
from .corrector import CorrectorBundle, assemble_corrector
from .flowmap import DegenerateFlowMap, div_A, kinematics
from .grid import Config, Grid, discrete_continuity, div_sym_grad, grad, grad_vector, pressure_stabilization, stress_top, to_physical
from .norms import anisotropic_norm, xt_norm, xt_terms
from .stokes import StokesState, stokes_step


class StageError(RuntimeError):
    """Failure tagged with the module and stage where it happened."""

    def __init__(self, module: str, stage: str, detail: str):
        self.module, self.stage, self.detail = module, stage, detail
        super().__init__(f"[{module}/{stage}] {detail}")


class SmallDataError(ValueError):
    def __init__(self, measured: float, threshold: float):
        self.measured, self.threshold = measured, threshold
        super().__init__(
            f"initial displacement too large: ||<grad_h>^(s-1) grad xi0||_H1 = {measured:.6g} "
            f"exceeds small_data_eps = {threshold:.6g}"
        )


class NonContraction(RuntimeError):
    def __init__(self, report: "IterationReport"):
        self.report = report
        super().__init__(
            "fixed-point iteration is not contracting: factors "
            + ", ".join(f"{f:.3g}" for f in report.factors[-3:])
        )


@dataclass(eq=False)
class LinearData:
    """Spectral data of one linear solve on the time levels 0..K.

    ``K1`` and ``K2`` are the velocities the nonlinear terms were frozen at
    (kept for reference; the tensors themselves are consumed when F2 and F3
    are formed).
    """

    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    K1: np.ndarray | None = None
    K2: np.ndarray | None = None

    @staticmethod
    def zeros(grid: Grid, n: int) -> "LinearData":
        return LinearData(
            F1=np.zeros((n, 3) + grid.shape, dtype=complex),
            F2=np.zeros((n,) + grid.shape, dtype=complex),
            F3=np.zeros((n, 3) + grid.ksq.shape, dtype=complex),
        )

    @staticmethod
    def from_iterate(xi: np.ndarray, v: np.ndarray, q: np.ndarray, grid: Grid, nu: float, floor: float) -> "LinearData":
        """Freeze the flow map of ``xi`` and the velocity/pressure ``(v, q)`` per time level."""
        n = v.shape[0]
        data = LinearData.zeros(grid, n)
        for k in range(n):
            try:
                kin = kinematics(xi[k], grid, floor)
                bt = assemble_tensors(kin, nu, floor, top_only=True)
            except ValueError as exc:
                raise StageError("btensors", f"assemble(t_{k})", str(exc)) from exc
            rhs = assemble_rhs(kin, bt, v[k], q[k], grid, nu)
            data.F1[k], data.F2[k], data.F3[k] = rhs.F1, rhs.F2, rhs.F3
        data.K1 = data.K2 = v
        return data


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    q: np.ndarray
    eta1: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


@dataclass(eq=False)
class LinearSolution:
    eta1: np.ndarray
    u: np.ndarray
    p: np.ndarray
    bundle: CorrectorBundle
    residuals: dict


@dataclass(eq=False)
class IterationReport:
    deltas: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    blowup: list = field(default_factory=list)
    smallness: float = 0.0
    t_final: float = 0.0
    n_steps: int = 0
    t_restricted: bool = False
    converged: bool = False
    passes: int = 0


# ---------------------------------------------------------------------------
# Linear problem


RESIDUAL_NAMES = ("displacement", "momentum", "divergence", "stress", "bottom", "initial")


def linear_residual_series(
    eta1: np.ndarray,
    u: np.ndarray,
    p: np.ndarray,
    data: LinearData,
    xi0_surface: np.ndarray,
    u0: np.ndarray,
    grid: Grid,
    cfg: Config,
    dt: float | None = None,
) -> dict:
    """Per-time max-norm residuals of the linear equations.

    Volume equations are checked at interior nodes, time derivatives are
    backward differences.  The pressure is not defined at the first level,
    so the evolution equations are checked from the second level on and
    ``initial`` (nonzero only at the first level) covers the initial data.
    Continuity includes the pressure stabilization term.
    """
    nu, g = cfg.nu, cfg.g
    dt = cfg.dt if dt is None else dt
    n = u.shape[0]
    names = ("surface_kinematic", "momentum", "divergence", "stress", "bottom", "initial")
    out = {name: np.zeros(n) for name in names}
    surf = (-2, -1)
    for k in range(n):
        if k > 0:
            r = (eta1[k] - eta1[k - 1]) / dt - u[k, 0, ..., -1]
            out["surface_kinematic"][k] = np.max(np.abs(to_physical(r, surf)))
            m = (u[k] - u[k - 1]) / dt - nu * div_sym_grad(u[k], grid) + grad(p[k], grid) - data.F1[k]
            out["momentum"][k] = np.max(np.abs(to_physical(m)[..., 1:-1]))
            dv = to_physical(discrete_continuity(u[k], p[k], grid) - data.F2[k])[..., 1:-1]
            out["divergence"][k] = np.max(np.abs(dv))
            st = stress_top(u[k], p[k], grid, nu)
            st[0] -= g * eta1[k]
            out["stress"][k] = np.max(np.abs(to_physical(st - data.F3[k], surf)))
        out["bottom"][k] = np.max(np.abs(to_physical(u[k, ..., 0], surf)))
    out["initial"][0] = max(
        float(np.max(np.abs(to_physical(u[0] - u0)))),
        float(np.max(np.abs(to_physical(eta1[0] - xi0_surface, surf)))),
    )
    return out


def linear_residuals(*args, **kwargs) -> dict:
    """Maxima over time of :func:`linear_residual_series`."""
    return {k: float(np.max(v)) for k, v in linear_residual_series(*args, **kwargs).items()}


def linear_solve(data: LinearData, xi0_surface: np.ndarray, u0: np.ndarray, grid: Grid, cfg: Config) -> LinearSolution:
    """Solve the linear free-boundary problem on the time levels of ``data``.

    The corrector removes the divergence and the boundary data, the
    homogeneous remainder W is advanced by backward Euler and the pieces are
    recombined as u = U + V + W and p = P1 + Q.
    """
    nu, g, dt = cfg.nu, cfg.g, cfg.dt
    n = data.F2.shape[0]
    try:
        bundle = assemble_corrector(data.F1, data.F2, data.F3, u0, grid, dt, nu)
    except ValueError as exc:
        raise StageError("corrector", "assemble_corrector", str(exc)) from exc
    state = StokesState(eta1=np.asarray(xi0_surface, dtype=complex), W=bundle.W0, Q=np.zeros(grid.shape, dtype=complex))
    eta1 = np.empty((n,) + grid.ksq.shape, dtype=complex)
    W = np.empty((n, 3) + grid.shape, dtype=complex)
    Q = np.zeros((n,) + grid.shape, dtype=complex)
    eta1[0], W[0] = state.eta1, state.W
    try:
        for k in range(1, n):
            f2 = pressure_stabilization(bundle.P1[k], grid)
            state = stokes_step(state, bundle.f0_tilde[k], bundle.f1_tilde[k], dt, grid, nu, g, f2)
            eta1[k], W[k], Q[k] = state.eta1, state.W, state.Q
    except ValueError as exc:
        raise StageError("stokes", "stokes_step", str(exc)) from exc
    u = bundle.U + bundle.V + W
    p = bundle.P1 + Q
    res = linear_residuals(eta1, u, p, data, xi0_surface, u0, grid, cfg)
    return LinearSolution(eta1=eta1, u=u, p=p, bundle=bundle, residuals=res)


def update_displacement(xi0: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal integration of xi_t = v with xi(0) = xi0."""
    xi = np.empty_like(v)
    xi[0] = xi0
    for k in range(1, v.shape[0]):
        xi[k] = xi[k - 1] + 0.5 * dt * (v[k - 1] + v[k])
    return xi


# ---------------------------------------------------------------------------
# Nonlinear problem


def displacement_gradient_norm(xi: np.ndarray, grid: Grid, s: float) -> float:
    """||<grad_h>^(s-1) grad xi||_{H1}."""
    return anisotropic_norm(grad_vector(xi, grid), grid, s - 1, "H1")


def restricted_horizon(xi0: np.ndarray, v0: np.ndarray, grid: Grid, cfg: Config) -> float:
    """Largest admissible horizon c ||L grad xi0||^2 / (||L xi0^1||_{H1(top)} + ||L v0||_{H1})^2."""
    s = cfg.s
    num = displacement_gradient_norm(xi0, grid, s) ** 2
    den = (anisotropic_norm(xi0[0, ..., -1], grid, s, "surface") + anisotropic_norm(v0, grid, s - 1, "H1")) ** 2
    return math.inf if den == 0 else cfg.t_restrict_c * num / den


def blowup_monitor(xi: np.ndarray, v: np.ndarray, eta1: np.ndarray, grid: Grid, s: float) -> tuple[float, float, float]:
    """(||L(grad xi, v)||_{H1}, ||xi^1||_{H^s(top)}, ||1/J||_inf) at one time."""
    a = displacement_gradient_norm(xi, grid, s) ** 2 + anisotropic_norm(v, grid, s - 1, "H1") ** 2
    kin = kinematics(xi, grid, j_min=0.0)
    jinv = float(np.max(1.0 / kin.J)) if np.min(kin.J) > 0 else math.inf
    return float(np.sqrt(a)), anisotropic_norm(eta1, grid, s, "surface"), jinv


def residual_series(traj: Trajectory, xi0: np.ndarray, v0: np.ndarray, grid: Grid, cfg: Config) -> dict:
    """Per-time residuals of the nonlinear Lagrangian system.

    Momentum, divergence and stress residuals use the same discrete
    operators and dealiasing as the iteration, so they vanish at a discrete
    fixed point.  ``displacement`` checks the trapezoidal xi_t = v and
    ``initial`` the initial displacement and velocity.
    """
    dt = traj.dt
    n = traj.v.shape[0]
    data = LinearData.from_iterate(traj.xi, traj.v, traj.q, grid, cfg.nu, cfg.j_min)
    lin = linear_residual_series(traj.eta1, traj.v, traj.q, data, xi0[0, ..., -1], v0, grid, cfg, dt)
    out = {name: np.zeros(n) for name in RESIDUAL_NAMES}
    for name in ("momentum", "divergence", "stress", "bottom"):
        out[name] = lin[name]
    for k in range(1, n):
        r = (traj.xi[k] - traj.xi[k - 1]) / dt - 0.5 * (traj.v[k] + traj.v[k - 1])
        out["displacement"][k] = np.max(np.abs(to_physical(r)))
    out["initial"][0] = max(lin["initial"][0], float(np.max(np.abs(to_physical(traj.xi[0] - xi0)))))
    return out


def residual_and_blowup_report(traj: Trajectory, xi0: np.ndarray, v0: np.ndarray, grid: Grid, cfg: Config) -> dict:
    """Residual series, their maxima and the blow-up triple per time.

    Returns a dict with ``series`` (name -> per-time array), the maxima under
    the residual names, ``blowup`` (list of triples), ``J_inv_max`` and
    ``lagrangian_divergence`` (pointwise div_A v at interior nodes, which
    also carries the truncation error of the nonlinear terms).
    """
    series = residual_series(traj, xi0, v0, grid, cfg)
    n = traj.v.shape[0]
    triple = [blowup_monitor(traj.xi[k], traj.v[k], traj.eta1[k], grid, cfg.s) for k in range(n)]
    lag_div = 0.0
    for k in range(n):
        kin = kinematics(traj.xi[k], grid, j_min=0.0)
        lag_div = max(lag_div, float(np.max(np.abs(div_A(kin, traj.v[k], grid)[..., 1:-1]))))
    report = {name: float(np.max(vals)) for name, vals in series.items()}
    report.update(series=series, blowup=triple, J_inv_max=max(t[2] for t in triple), lagrangian_divergence=lag_div)
    return report


def _difference_norm(a: Trajectory, b: Trajectory, grid: Grid, s: float) -> float:
    return float(sum(xt_terms(a.eta1 - b.eta1, a.v - b.v, a.q - b.q, grid, s, a.dt).values()))


def picard_solve(
    xi0: np.ndarray,
    v0: np.ndarray,
    cfg: Config,
    grid: Grid | None = None,
    compat_tol: float = 1e-8,
) -> tuple[Trajectory, IterationReport]:
    """Fixed-point iteration for the nonlinear free-boundary problem.

    Parameters
    ----------
    xi0, v0 : ndarray, shape (3, N2, N3, nv)
        Spectral initial displacement and velocity.
    cfg : Config
        ``tol_outer`` and ``max_iters`` control the outer loop;
        ``inner_iters > 0`` keeps the flow map frozen for that many velocity
        refreshes per outer pass.

    Raises
    ------
    SmallDataError
        If the displacement gradient exceeds ``small_data_eps``.
    NonContraction
        If the update norm fails to shrink on three consecutive passes.
    """
    from .grid import make_grid

    grid = grid if grid is not None else make_grid(cfg)
    xi0 = np.asarray(xi0, dtype=complex)
    v0 = np.asarray(v0, dtype=complex)
    report = IterationReport()
    report.smallness = displacement_gradient_norm(xi0, grid, cfg.s)
    if report.smallness > cfg.small_data_eps:
        raise SmallDataError(report.smallness, cfg.small_data_eps)
    kin0 = kinematics(xi0, grid)
    compat = float(np.max(np.abs((kin0.J * div_A(kin0, v0, grid))[..., 1:-1])))
    if compat > compat_tol * max(1.0, float(np.max(np.abs(to_physical(v0))))):
        raise ValueError(f"initial velocity violates the Lagrangian divergence constraint ({compat:.3g})")

    t_max = restricted_horizon(xi0, v0, grid, cfg)
    n_steps = cfg.n_steps
    dt = cfg.dt
    if cfg.t_final > t_max:
        report.t_restricted = True
        n_steps = int(t_max / dt) // 2 * 2
        if n_steps < 4:
            n_steps, dt = 4, t_max / 4.0
    cfg = cfg.replace(dt=dt, t_final=n_steps * dt)
    report.n_steps, report.t_final = n_steps, cfg.t_final
    n = n_steps + 1
    times = np.arange(n) * dt

    xi = np.broadcast_to(xi0, (n,) + xi0.shape).copy()
    prev = Trajectory(
        times=times,
        xi=xi,
        v=np.broadcast_to(v0, (n,) + v0.shape).copy(),
        q=np.zeros((n,) + grid.shape, dtype=complex),
        eta1=np.broadcast_to(xi0[0, ..., -1], (n,) + grid.ksq.shape).copy(),
    )
    xi0_top = xi0[0, ..., -1]
    bad = 0
    for it in range(cfg.max_iters):
        frozen_xi = prev.xi
        cur_v, cur_q = prev.v, prev.q
        for _ in range(max(1, cfg.inner_iters)):
            data = LinearData.from_iterate(frozen_xi, cur_v, cur_q, grid, cfg.nu, cfg.j_min)
            sol = linear_solve(data, xi0_top, v0, grid, cfg)
            cur_v, cur_q = sol.u, sol.p
        cur = Trajectory(times=times, xi=update_displacement(xi0, sol.u, dt), v=sol.u, q=sol.p, eta1=sol.eta1)
        delta = _difference_norm(cur, prev, grid, cfg.s)
        report.deltas.append(delta)
        if len(report.deltas) > 1:
            factor = delta / report.deltas[-2] if report.deltas[-2] > 0 else 0.0
            report.factors.append(factor)
            bad = bad + 1 if factor >= 1.0 else 0
        try:
            res = residual_and_blowup_report(cur, xi0, v0, grid, cfg)
        except (StageError, DegenerateFlowMap) as exc:
            raise StageError("picard", f"pass {it + 1}", str(exc)) from exc
        report.residuals.append({k: res[k] for k in RESIDUAL_NAMES + ("lagrangian_divergence", "J_inv_max")})
        report.blowup = res["blowup"]
        report.passes = it + 1
        prev = cur
        if delta <= cfg.tol_outer:
            report.converged = True
            break
        if bad >= 3:
            raise NonContraction(report)
    return prev, report


def trajectory_norm(traj: Trajectory, grid: Grid, s: float) -> float:
    return xt_norm(traj, grid, s)
