"""Acceptance criteria 1 to 12, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import filecmp

import numpy as np
import pytest

from slabwave.btensors import assemble_b1, contract_b1
from slabwave.cli import Scenario, run_scenario
from slabwave.corrector import TimeExtension, assemble_corrector, chi_end, chi_start, oracle_relative_error, remove_divergence
from slabwave.elliptic import harmonic_extension, solve_poisson
from slabwave.flowmap import DegenerateFlowMap, det3, jacobian_expansion, kinematics, kinematics_from_gradient, piola_residual
from slabwave.grid import Config, d1, dh, make_grid, to_physical, to_spectral
from slabwave.manufactured import observed_orders, quadratic_solution, recovery_error, smooth_solution
from slabwave.picard import picard_solve, trajectory_norm, Trajectory
from slabwave.samples import horizontal_coordinates, random_surface_field, random_volume_field, smooth_displacement
from slabwave.stokes import admissible_state, stokes_step

pytestmark = pytest.mark.acceptance


def _physical_energy(state, grid, g):
    """Energy by physical-space quadrature, independent of the spectral inner product."""
    n_h = grid.shape[0] * grid.shape[1]
    w = to_physical(state.W)
    eta = to_physical(state.eta1, (-2, -1))
    cell = grid.area / n_h
    return float(cell * np.sum(w * w * grid.weights) + g * cell * np.sum(eta * eta))


class TestAlgebraicIdentities:
    """Exact polynomial identities of the flow map and the divergence tensor."""

    def test_c1_jacobian_expansion(self, verdict):
        grid = make_grid(Config(modes=(8, 8), nv=9))
        rng = np.random.default_rng(101)
        worst = 0.0
        for _ in range(100):
            xi = random_volume_field(grid, rng, amplitude=0.3)
            g = to_physical(np.stack([d1(xi, grid), dh(xi, grid, 2), dh(xi, grid, 3)]))
            worst = max(worst, float(np.max(np.abs(det3(np.swapaxes(g, 0, 1) + np.eye(3)[:, :, None, None, None]) - jacobian_expansion(g)))))
        assert verdict(1, "Jacobian expansion identity", worst <= 1e-12, f"max defect {worst:.2e} over 100 fields, threshold 1e-12")

    def test_c11_divergence_equivalence(self, verdict):
        rng = np.random.default_rng(111)
        worst = 0.0
        for _ in range(100):
            g = 0.2 * rng.standard_normal((3, 3, 16))
            gv = rng.standard_normal((3, 3, 16))
            b1 = assemble_b1(kinematics_from_gradient(g), 0.0)
            lhs = np.einsum("ii...->...", gv) - contract_b1(b1, gv)
            # independent route: numpy inverse and determinant per point
            deta = np.moveaxis(np.swapaxes(g, 0, 1) + np.eye(3)[:, :, None], -1, 0)
            amat = np.swapaxes(np.linalg.inv(deta), 1, 2)
            jac = np.linalg.det(deta)
            a11 = jac * amat[:, 0, 0]
            rhs = jac * np.einsum("pik,pki->p", amat, np.moveaxis(gv, -1, 0)) / a11
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        assert verdict(11, "divergence equivalence identity", worst <= 1e-12, f"max defect {worst:.2e} over 100 pairs, threshold 1e-12")


class TestPiola:
    """Cofactor columns are discretely divergence-free to second order."""

    def test_c2_piola_order(self, verdict):
        errors = []
        for nv in (17, 33, 65):
            grid = make_grid(Config(modes=(16, 16), nv=nv))
            y2, y3, x = horizontal_coordinates(grid)
            xi = 0.1 * np.stack([np.sin(y2) * np.cos(2 * x), np.cos(y3) * np.sin(x + y2), np.sin(y2 + y3) * np.exp(x)])
            errors.append(float(np.max(np.abs(piola_residual(kinematics(to_spectral(xi), grid), grid)))))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        ok = bool(np.all(orders >= 1.8))
        assert verdict(2, "Piola identity order", ok, f"orders {np.round(orders, 3).tolist()}, threshold 1.8")


def _profile(x):
    """w = sin(2 x + 0.3) exp(x / 2) and its first two derivatives."""
    e, sn, cs = np.exp(0.5 * x), np.sin(2.0 * x + 0.3), np.cos(2.0 * x + 0.3)
    return sn * e, (2.0 * cs + 0.5 * sn) * e, (-3.75 * sn + 2.0 * cs) * e


def _layout_problem(layout, grid):
    """Exact u = sin(y2) w(x1), its Laplacian and the boundary data of the layout."""
    y2, _, x = horizontal_coordinates(grid)
    w, dw, d2w = _profile(x)
    u = np.sin(y2) * w
    lap = np.sin(y2) * (d2w - w)
    s = np.sin(y2[..., 0])
    top_val, top_der = s * w[..., -1], s * dw[..., -1]
    bot_val, bot_der = s * w[..., 0], s * dw[..., 0]
    data = {
        "mixed-top-neumann": (top_der, bot_val),
        "mixed-top-dirichlet": (top_val, bot_der),
        "full-dirichlet": (top_val, bot_val),
    }[layout]
    return u, to_spectral(lap), tuple(to_spectral(d, (-2, -1)) for d in data)


class TestElliptic:
    """Mode-wise Poisson solvers and the closed-form harmonic extension."""

    def test_c3_layouts_and_extension(self, verdict):
        orders = {}
        for layout in ("mixed-top-neumann", "mixed-top-dirichlet", "full-dirichlet"):
            errs = []
            for nv in (17, 33, 65):
                grid = make_grid(Config(modes=(8, 8), nv=nv))
                u, f, (top, bottom) = _layout_problem(layout, grid)
                num = to_physical(solve_poisson(f, grid, layout, top, bottom))
                errs.append(float(np.max(np.abs(num - u))))
            orders[layout] = float(np.min(np.log2(np.array(errs[:-1]) / np.array(errs[1:]))))
        # the divergence-removal potential: zero on top, zero normal derivative at the bottom
        errs = []
        for nv in (17, 33, 65):
            grid = make_grid(Config(modes=(8, 8), nv=nv))
            y2, _, x = horizontal_coordinates(grid)
            # subtracting a linear part gives psi = 0 on top and d1 psi = 0 at the bottom
            w, _, d2w = _profile(x)
            w0, dwb = _profile(np.array([0.0]))[0][0], _profile(np.array([-1.0]))[1][0]
            psi = np.sin(y2) * (w - w0 - dwb * x)
            lap = np.sin(y2) * d2w - psi
            num, _ = remove_divergence(to_spectral(lap), grid)
            errs.append(float(np.max(np.abs(to_physical(num) - psi))))
        orders["divergence potential"] = float(np.min(np.log2(np.array(errs[:-1]) / np.array(errs[1:]))))

        grid = make_grid(Config(modes=(16, 16), nv=33, depth_b=1.3))
        surf = random_surface_field(grid, np.random.default_rng(3))
        ext = harmonic_extension(surf, grid)
        k = grid.kabs[..., None]
        x, b = grid.x1, grid.depth
        with np.errstate(divide="ignore", invalid="ignore"):
            closed = np.where(k > 0, np.sinh(k * (x + b)) / np.sinh(k * b), (x + b) / b) * surf[..., None]
        ext_err = float(np.max(np.abs(ext - closed)))
        ok = min(orders.values()) >= 1.8 and ext_err <= 1e-12
        detail = ", ".join(f"{k} {v:.3f}" for k, v in orders.items()) + f"; extension defect {ext_err:.1e}"
        assert verdict(3, "elliptic solvers", ok, detail)


class TestCorrector:
    """Divergence removal and boundary homogenization on random data."""

    def test_c4_corrector_residuals(self, verdict):
        T = 0.5
        cfg = Config(modes=(32, 32), nv=33, dt=T / 64, t_final=T)
        grid = make_grid(cfg)
        rng = np.random.default_rng(404)
        t = np.arange(cfg.n_steps + 1) * cfg.dt
        a2, b2 = random_volume_field(grid, rng, None), random_volume_field(grid, rng, None)
        a3, b3 = random_surface_field(grid, rng, 3), random_surface_field(grid, rng, 3)
        F2 = np.stack([np.sin(2.0 * s + 0.4) * a2 + np.cos(3.0 * s) * b2 for s in t])
        F3 = np.stack([np.cos(1.5 * s) * a3 + s * b3 for s in t])
        F1 = np.zeros((t.size, 3) + grid.shape, dtype=complex)
        bundle = assemble_corrector(F1, F2, F3, np.zeros((3,) + grid.shape), grid, cfg.dt, cfg.nu)
        names = ("divergence", "top_stress", "bottom_trace", "U1_bottom", "P1_trace")
        worst = max(bundle.residuals[n] for n in names)
        detail = ", ".join(f"{n} {bundle.residuals[n]:.1e}" for n in names)
        assert verdict(4, "corrector residuals", worst <= 1e-6, detail + ", threshold 1e-6")

    def test_c5_frequency_oracle(self, verdict):
        cfg = Config(modes=(16, 16), nv=33, dt=0.01, t_final=10.0)
        grid = make_grid(cfg)
        tau = 2.0
        errs = {lat[0]: oracle_relative_error(grid, tau, lat, cfg.t_final, cfg.dt) for lat in ((1, 0), (2, 0), (4, 0))}
        ok = max(errs.values()) <= 0.05
        detail = ", ".join(f"|k|={k}: {e:.2e}" for k, e in errs.items()) + f", tau T = {tau * cfg.t_final:g}, threshold 5e-2"
        assert verdict(5, "frequency oracle", ok, detail)

    def test_c10_time_extension(self, verdict):
        # the second difference across an endpoint is -2 a'' dt^2 + O(dt^3), so the
        # one-sided derivative mismatch divided by dt tends to 2 |a''|
        curvature = {0: 1.0, 1: abs(np.e - 2.0 * np.sin(2.0))}
        scaled = {0: [], 1: []}
        exact = True
        for K in (16, 32, 64, 128, 256):
            dt = 1.0 / K
            ext = TimeExtension(K, dt)
            t = np.arange(K + 1) * dt
            a = np.exp(t) + 0.5 * np.sin(2.0 * t)
            e = ext.apply(a)
            p0, pT = ext.position(0), ext.position(K)
            # both reflection formulas evaluated at their endpoint reproduce the sample exactly
            left = (a[0] + 2.0 * (a[0] - a[0])) * chi_start(np.array(0.0), ext.T)
            right = (a[K] + 2.0 * (a[K] - a[K])) * chi_end(np.array(ext.T), ext.T)
            exact &= bool(left == a[0] and right == a[K] and e[p0] == a[0] and e[pT] == a[K])
            exact &= bool(e[0] == 0.0 and e[-1] == 0.0)
            for end, p in ((0, p0), (1, pT)):
                mismatch = abs((e[p + 1] - e[p]) - (e[p] - e[p - 1])) / dt
                scaled[end].append(mismatch / (2.0 * curvature[end] * dt))
        T = 1.0
        before = np.linspace(-5.0, -0.5, 200) * T
        after = np.linspace(1.5, 7.0, 200) * T
        vanish = bool(np.all(chi_start(before, T) == 0.0) and np.all(chi_end(after, T) == 0.0))
        s = np.array([scaled[0], scaled[1]])
        bounded = bool(np.all((s >= 0.5) & (s <= 1.5)))
        limit = bool(np.all(np.abs(s[:, -1] - 1.0) <= 0.05))
        ok = exact and vanish and bounded and limit
        detail = (
            f"endpoint exact {exact}, vanishing {vanish}, mismatch / (2|a''| dt) "
            f"t=0 {np.round(s[0], 3).tolist()} t=T {np.round(s[1], 3).tolist()}"
        )
        assert verdict(10, "time extension", ok, detail)


class TestStokes:
    """Unforced backward-Euler steps dissipate energy."""

    def test_c6_dissipativity(self, verdict):
        cfg = Config(modes=(16, 16), nv=17, dt=0.01, t_final=2.0)
        grid = make_grid(cfg)
        rng = np.random.default_rng(606)
        zero0 = np.zeros(grid.ksq.shape, dtype=complex)
        zero1 = np.zeros((3,) + grid.shape, dtype=complex)
        worst = -np.inf
        for _ in range(20):
            state = admissible_state(grid, rng, cfg.nu, cfg.g, cfg.dt)
            e_prev = _physical_energy(state, grid, cfg.g)
            for _ in range(200):
                state = stokes_step(state, zero0, zero1, cfg.dt, grid, cfg.nu, cfg.g)
                e = _physical_energy(state, grid, cfg.g)
                worst = max(worst, e - e_prev)
                e_prev = e
        assert verdict(6, "dissipativity", worst <= 1e-10, f"largest energy increment {worst:.2e}, threshold 1e-10")


class TestLinearPipeline:
    """Manufactured-solution recovery under split refinement."""

    def test_c7_recovery_orders(self, verdict):
        sol = smooth_solution(1.0)
        errs, hs = [], []
        for nv in (17, 33, 65):
            cfg = Config(modes=(8, 8), nv=nv, dt=1.0 / 16, t_final=0.25)
            errs.append(recovery_error(sol, cfg).errors)
            hs.append(1.0 / (nv - 1))
        h_orders = {k: float(np.min(observed_orders(hs, [e[k] for e in errs]))) for k in ("u", "eta1", "p")}
        sol = quadratic_solution(1.0)
        errs, dts = [], []
        for K in (8, 16, 32, 64):
            cfg = Config(modes=(8, 8), nv=9, dt=0.5 / K, t_final=0.5)
            errs.append(recovery_error(sol, cfg).errors)
            dts.append(0.5 / K)
        t_orders = {k: float(np.min(observed_orders(dts, [e[k] for e in errs]))) for k in ("u", "eta1")}
        ok = h_orders["u"] >= 1.8 and t_orders["u"] >= 0.9 and t_orders["eta1"] >= 0.9
        detail = "h: " + ", ".join(f"{k} {v:.2f}" for k, v in h_orders.items())
        detail += "; dt: " + ", ".join(f"{k} {v:.2f}" for k, v in t_orders.items())
        assert verdict(7, "linear pipeline orders", ok, detail + "; thresholds 1.8 (h) and 0.9 (dt)")


def _picard_config():
    return Config(modes=(16, 16), nv=17, dt=1.0 / 32, t_final=0.25, max_iters=10, tol_outer=1e-13)


def _difference(a: Trajectory, b: Trajectory, grid, s):
    diff = Trajectory(times=a.times, xi=a.xi - b.xi, v=a.v - b.v, q=a.q - b.q, eta1=a.eta1 - b.eta1)
    return trajectory_norm(diff, grid, s)


class TestPicard:
    """Fixed-point iteration for the nonlinear problem."""

    def test_c8_contraction(self, verdict):
        cfg = _picard_config()
        grid = make_grid(cfg)
        runs = {}
        for amp in (1e-2, 5e-3):
            xi0 = smooth_displacement(grid, amp)
            runs[amp] = picard_solve(xi0, np.zeros_like(xi0), cfg, grid)
        traj, rep = runs[1e-2]
        factors = np.array(rep.factors)
        mom = [r["momentum"] for r in rep.residuals]
        drop = mom[0] / min(mom[:5])
        ratio = trajectory_norm(traj, grid, cfg.s) / trajectory_norm(runs[5e-3][0], grid, cfg.s)
        ok = bool(factors.size > 0 and np.all(factors < 1.0)) and drop >= 10.0 and abs(ratio - 2.0) <= 0.4
        detail = f"factors {np.round(factors, 3).tolist()}, momentum drop {drop:.1e} within 5 passes, norm ratio {ratio:.3f}"
        assert verdict(8, "Picard contraction", ok, detail)

    def test_c9_reproducibility_and_stability(self, verdict, tmp_path):
        cfg_text = "[physics]\nnu = 1.0\n\n[grid]\nmodes = 8 8\nnv = 9\n\n[time]\ndt = 0.0625\nt_final = 0.25\n"
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(cfg_text)
        identical = True
        for kind in ("validate", "evolve"):
            outs = []
            for rep in range(2):
                out = tmp_path / f"{kind}{rep}"
                res = run_scenario(Scenario(kind=kind, config_path=str(cfg_path), out_dir=str(out), seed=77))
                assert res.code == 0, res.lines
                outs.append(out)
            cmp = filecmp.dircmp(outs[0], outs[1])
            names = sorted(p.name for p in outs[0].iterdir())
            identical &= not cmp.left_only and not cmp.right_only
            identical &= all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)

        cfg = _picard_config()
        grid = make_grid(cfg)
        xi0 = smooth_displacement(grid, 1e-2)
        y2, y3, x = horizontal_coordinates(grid)
        bump = to_spectral(np.stack([np.sin(y2 + y3), np.cos(y3), np.zeros_like(x)]) * ((x + 1.0) ** 2)[None])
        base, _ = picard_solve(xi0, np.zeros_like(xi0), cfg, grid)
        constants = {}
        for delta in (1e-4, 1e-5):
            pert, _ = picard_solve(xi0 + delta * bump, np.zeros_like(xi0), cfg, grid)
            constants[delta] = _difference(pert, base, grid, cfg.s) / delta
        spread = max(constants.values()) / min(constants.values())
        ok = identical and spread <= 2.0
        detail = f"bit-identical {identical}, C(1e-4) {constants[1e-4]:.4g}, C(1e-5) {constants[1e-5]:.4g}, spread {spread:.3f}"
        assert verdict(9, "reproducibility and stability", ok, detail)


class TestBlowupMonitor:
    """Folded flow maps are rejected with the reciprocal Jacobian reported."""

    def test_c12_folded_map(self, verdict):
        grid = make_grid(Config(modes=(8, 8), nv=17))
        y2, _, x = horizontal_coordinates(grid)
        # d1 xi^1 = -1.5 cos(y2)^2 folds the map where cos(y2)^2 > 2/3
        xi = to_spectral(np.stack([-0.75 * (x + 1.0) * (1.0 + np.cos(2.0 * y2)), np.zeros_like(x), np.zeros_like(x)]))
        raised, reported = False, np.nan
        try:
            kinematics(xi, grid)
        except DegenerateFlowMap as exc:
            raised = exc.j_min_found < grid.config.j_min
            reported = exc.j_inv_max
        # a mild map passes and reports a finite reciprocal Jacobian
        ok_map = kinematics(0.1 * xi, grid)
        expected = 1.0 / float(np.min(1.0 - 0.075 * (1.0 + np.cos(2.0 * y2))))
        finite = abs(ok_map.j_inv_max - expected) <= 1e-10 * expected
        ok = raised and finite and (np.isinf(reported) or reported > 1.0 / grid.config.j_min)
        assert verdict(12, "blow-up monitor", ok, f"raised {raised}, reported ||1/J|| {reported}, mild map ||1/J|| {ok_map.j_inv_max:.6f}")
