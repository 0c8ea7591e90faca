"""
Randomized invariant checks, one group per module.

Each check returns a :class:`Check` holding the measured value and the
threshold it must not exceed.  The ``validate`` command runs all groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .btensors import assemble_b1, assemble_b2, boundary_reference, contract_b1
from .corrector import assemble_corrector
from .elliptic import BvpSpec, harmonic_extension, solve_poisson, solve_vertical_bvp
from .flowmap import jacobian_expansion, kinematics_from_gradient
from .grid import Config, Grid, dh, make_grid, to_physical, to_spectral
from .norms import anisotropic_norm
from .picard import Trajectory, residual_and_blowup_report
from .samples import random_surface_field, random_volume_field
from .stokes import admissible_state, energy_identity_check, stokes_step


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


def _grid_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    f = rng.standard_normal(grid.shape)
    round_trip = float(np.max(np.abs(to_physical(to_spectral(f)).real - f)))
    y2 = np.arange(grid.shape[0]) * grid.config.period[0] / grid.shape[0]
    mode = np.broadcast_to(np.sin(2.0 * np.pi * y2 / grid.config.period[0])[:, None, None], grid.shape)
    exact = np.broadcast_to((2.0 * np.pi / grid.config.period[0]) * np.cos(2.0 * np.pi * y2 / grid.config.period[0])[:, None, None], grid.shape)
    deriv = float(np.max(np.abs(to_physical(dh(to_spectral(mode), grid, 2)).real - exact)))
    quad = grid.x1**2
    d1_exact = float(np.max(np.abs(quad @ grid.d1.T - 2.0 * grid.x1)))
    return [
        Check("grid", "spectral round trip", round_trip, 1e-12),
        Check("grid", "horizontal derivative of a single mode", deriv, 1e-12),
        Check("grid", "vertical difference exact on quadratics", d1_exact, 1e-10),
    ]


def _flowmap_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    worst = 0.0
    for _ in range(20):
        g = 0.3 * rng.standard_normal((3, 3, 8))
        kin = kinematics_from_gradient(g)
        worst = max(worst, float(np.max(np.abs(kin.J - jacobian_expansion(g)))))
    cof_inverse = 0.0
    for _ in range(5):
        g = 0.3 * rng.standard_normal((3, 3, 4))
        kin = kinematics_from_gradient(g)
        prod = np.einsum("ik...,jk...->ij...", kin.Amat, kin.Deta)
        cof_inverse = max(cof_inverse, float(np.max(np.abs(prod - np.eye(3)[:, :, None]))))
    return [
        Check("flowmap", "Jacobian expansion identity", worst, 1e-12),
        Check("flowmap", "A (D eta)^T = I", cof_inverse, 1e-12),
    ]


def _btensor_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    equivalence = 0.0
    boundary = 0.0
    nu = grid.config.nu
    for _ in range(20):
        g = 0.2 * rng.standard_normal((3, 3, 6))
        gv = rng.standard_normal((3, 3, 6))
        kin = kinematics_from_gradient(g)
        b1 = assemble_b1(kin, 0.0)
        lhs = np.einsum("ii...->...", gv) - contract_b1(b1, gv)
        rhs = kin.J * np.einsum("ik...,ki...->...", kin.Amat, gv) / kin.cof[0, 0]
        equivalence = max(equivalence, float(np.max(np.abs(lhs - rhs))))
        b2 = assemble_b2(kin, nu, 0.0)
        for m in range(g.shape[-1]):
            gh = rng.standard_normal((3, 2))
            ref = boundary_reference(kin.Amat[..., m], float(kin.J[m]), nu, gh)
            got = np.einsum("jai,ia->j", b2[..., m], gh)
            boundary = max(boundary, float(np.max(np.abs(ref - got))))
    return [
        Check("btensors", "divergence equivalence identity", equivalence, 1e-12),
        Check("btensors", "boundary tensor against direct solve", boundary, 1e-12),
    ]


def _elliptic_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    x = grid.x1
    b = grid.depth
    prof = solve_vertical_bvp(BvpSpec(1.0, np.zeros(grid.nv), ("dirichlet", 1.0), ("dirichlet", 0.0)), grid)
    closed = np.sinh(x + b) / np.sinh(b)
    f = random_volume_field(grid, rng, None)
    g = random_volume_field(grid, rng, None)
    lin = solve_poisson(2.0 * f - 3.0 * g, grid, "mixed-top-neumann") - (
        2.0 * solve_poisson(f, grid, "mixed-top-neumann") - 3.0 * solve_poisson(g, grid, "mixed-top-neumann")
    )
    surf = random_surface_field(grid, rng)
    ext = harmonic_extension(surf, grid)
    top_trace = float(np.max(np.abs(ext[..., -1] - surf)))
    return [
        Check("elliptic", "sinh profile within O(h^2)", float(np.max(np.abs(prof - closed))), 10.0 * grid.h**2),
        Check("elliptic", "linearity", float(np.max(np.abs(lin))), 1e-10),
        Check("elliptic", "harmonic extension top trace", top_trace, 1e-12),
    ]


def _corrector_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    cfg = grid.config
    n = 9
    dt = cfg.dt
    t = np.arange(n) * dt
    base2 = random_volume_field(grid, rng, None)
    base3 = random_surface_field(grid, rng, 3)
    F2 = np.stack([np.sin(2.0 * tt + 1.0) * base2 for tt in t])
    F3 = np.stack([np.cos(3.0 * tt) * base3 for tt in t])
    F1 = np.zeros((n, 3) + grid.shape, dtype=complex)
    bundle = assemble_corrector(F1, F2, F3, np.zeros((3,) + grid.shape), grid, dt, cfg.nu)
    res = bundle.residuals
    return [
        Check("corrector", name, float(res[name]), 1e-6)
        for name in ("divergence", "top_stress", "bottom_trace", "U1_bottom", "P1_trace")
    ]


def _stokes_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    cfg = grid.config
    state = admissible_state(grid, rng, cfg.nu, cfg.g, cfg.dt)
    history = [state]
    zero0 = np.zeros(grid.ksq.shape, dtype=complex)
    zero1 = np.zeros((3,) + grid.shape, dtype=complex)
    for _ in range(20):
        state = stokes_step(state, zero0, zero1, cfg.dt, grid, cfg.nu, cfg.g)
        history.append(state)
    rep = energy_identity_check(history, grid, cfg.nu, cfg.g, cfg.dt)
    return [
        Check("stokes", "energy increment", rep["max_increment"], 1e-10),
        Check("stokes", "good-unknown top trace", rep["gw_top"], 1e-8),
    ]


def _picard_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    n = 5
    zero = np.zeros((n, 3) + grid.shape, dtype=complex)
    traj = Trajectory(
        times=np.arange(n) * grid.config.dt,
        xi=zero,
        v=zero,
        q=np.zeros((n,) + grid.shape, dtype=complex),
        eta1=np.zeros((n,) + grid.ksq.shape, dtype=complex),
    )
    rep = residual_and_blowup_report(traj, zero[0], zero[0], grid, grid.config)
    worst = max(rep[k] for k in ("displacement", "momentum", "divergence", "stress", "bottom", "initial"))
    return [
        Check("picard", "zero trajectory residuals", worst, 0.0),
        Check("picard", "zero trajectory |1/J| - 1", abs(rep["J_inv_max"] - 1.0), 0.0),
    ]


def _norm_checks(grid: Grid, rng: np.random.Generator) -> list[Check]:
    f = random_volume_field(grid, rng, None)
    s = grid.config.s
    # Parseval: spectral L2 against a physical quadrature of the multiplied field
    phys = to_physical(f * (1.0 + grid.ksq[:, :, None]) ** (0.5 * s))
    quad = np.sqrt(grid.area / phys[..., 0].size * np.sum(np.abs(phys) ** 2 * grid.weights))
    spectral = anisotropic_norm(f, grid, s, "L2")
    alpha = -2.7
    homog = abs(anisotropic_norm(alpha * f, grid, s - 1, "H1") - abs(alpha) * anisotropic_norm(f, grid, s - 1, "H1"))
    return [
        Check("norms", "Parseval against physical quadrature", abs(quad - spectral) / spectral, 1e-10),
        Check("norms", "homogeneity", homog / anisotropic_norm(f, grid, s - 1, "H1"), 1e-12),
    ]


SUITES: dict[str, Callable[[Grid, np.random.Generator], list[Check]]] = {
    "grid": _grid_checks,
    "flowmap": _flowmap_checks,
    "btensors": _btensor_checks,
    "elliptic": _elliptic_checks,
    "corrector": _corrector_checks,
    "stokes": _stokes_checks,
    "picard": _picard_checks,
    "norms": _norm_checks,
}


def run_suites(cfg: Config, seed: int, modules: list[str] | None = None) -> list[Check]:
    """Run the invariant checks of the selected modules with one seeded generator."""
    grid = make_grid(cfg)
    rng = np.random.default_rng(seed)
    out: list[Check] = []
    for name in modules or list(SUITES):
        out.extend(SUITES[name](grid, rng))
    return out
