"""Tests for divergence removal, the time extension and boundary homogenization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slabwave.corrector import (
    TimeExtension,
    assemble_corrector,
    bottom_correction,
    chi_start,
    curl_potential,
    frequency_oracle,
    make_cutoffs,
    radial_root,
    remove_divergence,
    smoothstep,
    surface_heat_solve,
    surface_matrix,
    time_extend,
    vector_potential_solve,
)
from slabwave.grid import Config, d1, div, make_grid, to_physical, to_spectral
from slabwave.samples import horizontal_coordinates, random_surface_field, random_volume_field


class TestCutoffs:
    """Smooth ramps in space and time."""

    def test_smoothstep_endpoints(self):
        u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
        assert np.array_equal(smoothstep(u), [0.0, 0.0, 0.5, 1.0, 1.0])

    def test_vertical_cutoffs(self, default_grid):
        cut = make_cutoffs(default_grid)
        x = default_grid.x1
        assert np.all(cut.chi_b[x <= -2.0 / 3.0] == 1.0) and np.all(cut.chi_b[x >= -1.0 / 3.0] == 0.0)
        assert np.all(cut.chi_f[x >= -2.0 / 3.0] == 1.0) and np.all(cut.chi_f[x <= -5.0 / 6.0] == 0.0)


class TestTimeExtension:
    """Reflection extension of sampled series."""

    def test_constant_series(self):
        ext = TimeExtension(8, 0.125)
        out = ext.apply(np.full(9, 2.5))
        assert np.array_equal(out, 2.5 * ext.weights)
        assert out[ext.position(-1)] == 2.5

    def test_slope_matching_at_start(self):
        gaps = []
        for K in (16, 32, 64):
            dt = 1.0 / K
            times, out = time_extend(np.arange(K + 1) * dt, dt)
            p = int(np.flatnonzero(times == 0.0)[0])
            gaps.append(abs((out[p] - out[p - 1]) / dt - 1.0))
        # the reflection of a linear function is linear: the slope is exact
        assert max(gaps) <= 1e-12

    def test_slope_mismatch_is_first_order(self):
        gaps = []
        for K in (32, 64, 128):
            dt = 1.0 / K
            t = np.arange(K + 1) * dt
            _, out = time_extend(np.exp(t), dt)
            p = K // 2
            gaps.append(abs((out[p + 1] - out[p]) / dt - (out[p] - out[p - 1]) / dt))
        assert 1.6 <= gaps[0] / gaps[1] <= 2.4 and 1.6 <= gaps[1] / gaps[2] <= 2.4

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 20).map(lambda n: 2 * n), st.integers(0, 2**32 - 1))
    def test_support(self, K, seed):
        series = np.random.default_rng(seed).standard_normal(K + 1)
        ext = TimeExtension(K, 1.0 / K)
        out = ext.apply(series)
        assert out[0] == 0.0 and out[-1] == 0.0
        assert np.array_equal(out[ext.position(0) : ext.position(K) + 1], series)
        assert np.all(chi_start(np.linspace(-3.0, -0.5, 50), 1.0) == 0.0)

    def test_rejects_short_or_odd_grids(self):
        with pytest.raises(ValueError, match="even number of steps"):
            TimeExtension(5, 0.1)
        with pytest.raises(ValueError, match="even number of steps"):
            TimeExtension(2, 0.1)

    def test_out_of_range_index(self):
        ext = TimeExtension(8, 0.1)
        with pytest.raises(IndexError):
            ext.sample(np.zeros(9), 13)


class TestDivergenceRemoval:
    """U with prescribed divergence and zero bottom normal trace."""

    def test_zero_data(self, grid):
        psi, U = remove_divergence(np.zeros(grid.shape, complex), grid)
        assert np.all(psi == 0) and np.all(U == 0)

    def test_single_mode_profile(self):
        """F2 = sin(y2): Psi = (cosh(x1 + 1) / cosh(1) - 1) sin(y2)."""
        errs = []
        for nv in (17, 33, 65):
            grid = make_grid(Config(modes=(8, 8), nv=nv))
            y2, _, x = horizontal_coordinates(grid)
            psi, U = remove_divergence(to_spectral(np.sin(y2)), grid)
            exact = np.sin(y2) * np.sinh(x + 1.0) / np.cosh(1.0)
            errs.append(np.max(np.abs(to_physical(U[0]) - exact)))
        assert np.all(np.log2(np.array(errs[:-1]) / np.array(errs[1:])) >= 1.8)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_exact_interior_divergence(self, seed):
        grid = make_grid(Config(modes=(8, 8), nv=9))
        F2 = random_volume_field(grid, np.random.default_rng(seed), None)
        _, U = remove_divergence(F2, grid)
        assert np.max(np.abs((div(U, grid) - F2)[..., 1:-1])) <= 1e-11
        assert np.max(np.abs(U[0, ..., 0])) <= 1e-12


class TestSurfaceSystem:
    """Per-mode surface system for the potential trace."""

    def test_matrix_is_symmetric_negative(self, grid):
        m = surface_matrix(grid)
        assert np.allclose(m, np.swapaxes(m, -1, -2))
        lam = np.linalg.eigvalsh(m)
        assert np.all(lam[grid.ksq > 0] < 0)

    def test_zero_forcing(self, grid):
        phi, pi = surface_heat_solve(np.zeros((5, 3) + grid.ksq.shape, complex), grid, 0.1, 1.0)
        assert np.all(phi == 0) and np.all(pi == 0)

    def test_constant_forcing_steady_state(self, grid):
        nu, dt = 1.0, 0.05
        # slowest decay rate of the (1, 0) mode is 1, so 20 decay times leave e^-20
        n = int(round(20.0 / dt)) + 1
        F = np.zeros((n, 3) + grid.ksq.shape, complex)
        F[:, 1, 1, 0] = 0.4 - 0.2j
        F[:, 2, 1, 0] = -0.3 + 0.1j
        phi, _ = surface_heat_solve(F, grid, dt, nu)
        forcing = np.array([-F[0, 2, 1, 0], F[0, 1, 1, 0]]) / nu
        steady = -np.linalg.solve(surface_matrix(grid)[1, 0], forcing)
        assert np.max(np.abs(phi[-1, :, 1, 0] - steady)) <= 1e-8 * np.max(np.abs(steady))

    def test_helmholtz_potential_consistency(self, grid, rng):
        F = np.stack([random_surface_field(grid, rng, 3) for _ in range(6)])
        phi, pi = surface_heat_solve(F, grid, 0.1, 1.3)
        divh = 1j * grid.dk2[:, None] * phi[:, 0] + 1j * grid.dk3[None, :] * phi[:, 1]
        assert np.max(np.abs(-grid.ksq * pi - divh)[:, grid.ksq > 0]) <= 1e-12


class TestVectorPotential:
    """Heat flow of the vector potential and its frequency response."""

    def test_radial_root_values(self):
        assert radial_root(0.0, 1.0) == 1.0
        assert radial_root(2.0, 0.0) == pytest.approx(1.0 + 1.0j, abs=1e-15)

    def test_oracle_vanishes_for_zero_data(self, grid):
        assert np.all(frequency_oracle(2.0, (1.0, 0.0), (0.0, 0.0), 0.0, grid.x1, 1.0) == 0)

    def test_zero_data(self, grid):
        z = np.zeros((4, 2) + grid.ksq.shape, complex)
        phi, V1, kept = vector_potential_solve(z, z, grid, 0.1)
        assert np.all(phi == 0) and np.all(V1 == 0) and kept.tolist() == [0, 1, 2, 3]

    def test_curl_is_divergence_free(self, grid, rng):
        pot = np.stack([random_volume_field(grid, rng, None) for _ in range(2)])
        assert np.max(np.abs(div(curl_potential(pot, grid), grid))) <= 1e-12

    def test_boundary_values(self, grid, rng):
        Phi = np.stack([random_surface_field(grid, rng, 2) for _ in range(3)])
        bottom = np.stack([random_surface_field(grid, rng, 2) for _ in range(3)])
        phi, _, _ = vector_potential_solve(Phi, bottom, grid, 0.1)
        assert np.max(np.abs(phi[1:, 1:, ..., -1] - Phi[1:])) <= 1e-12
        d1phi = d1(phi[2, 1:], grid)[..., 0]
        assert np.max(np.abs(d1phi - np.stack([-bottom[2, 1], bottom[2, 0]]))) <= 1e-10


class TestBottomCorrection:
    """Divergence-free field that carries the bottom normal trace."""

    def test_zero_trace(self, grid, rng):
        V1 = random_volume_field(grid, rng)
        V1[0, ..., 0] = 0.0
        assert np.max(np.abs(bottom_correction(V1, grid, make_cutoffs(grid)))) == 0.0

    def test_traces_and_divergence(self, default_grid, rng):
        grid = default_grid
        V1 = random_volume_field(grid, rng)
        V2 = bottom_correction(V1, grid, make_cutoffs(grid))
        nz = grid.ksq > 0
        assert np.max(np.abs((V2[0, ..., 0] + V1[0, ..., 0])[nz])) <= 1e-12
        assert np.max(np.abs(V2[1:, ..., 0])) <= 1e-12
        assert np.all(V2[:, 0, 0] == 0)
        assert np.max(np.abs(div(V2, grid)[..., 1:-1])) <= 1e-10 * max(1.0, np.max(np.abs(V2)))


class TestAssembly:
    """The full corrector on a short time grid."""

    def _data(self, grid, n, rng, with_boundary=True):
        t = np.arange(n)
        F1 = np.stack([np.cos(0.1 * k) * random_volume_field(grid, rng) for k in t])
        F2 = np.stack([np.sin(0.2 * k + 0.1) * random_volume_field(grid, rng, None) for k in t])
        F3 = np.stack([np.cos(0.3 * k) * random_surface_field(grid, rng, 3) for k in t])
        if not with_boundary:
            F2[:] = 0.0
            F3[:] = 0.0
        return F1, F2, F3

    def test_no_divergence_or_boundary_data(self, cfg, grid, rng):
        F1, F2, F3 = self._data(grid, 5, rng, with_boundary=False)
        u0 = random_volume_field(grid, rng)
        bundle = assemble_corrector(F1, F2, F3, u0, grid, cfg.dt, cfg.nu)
        assert np.max(np.abs(bundle.U)) == 0.0 and np.max(np.abs(bundle.V)) <= 1e-14
        assert np.max(np.abs(bundle.f1_tilde - F1)) <= 1e-13
        assert np.max(np.abs(bundle.W0 - u0)) <= 1e-14

    def test_residuals_and_pressure_trace(self, cfg, grid, rng):
        F1, F2, F3 = self._data(grid, 5, rng)
        bundle = assemble_corrector(F1, F2, F3, np.zeros((3,) + grid.shape), grid, cfg.dt, cfg.nu)
        for name in ("divergence", "top_stress", "bottom_trace", "U1_bottom", "P1_trace"):
            assert bundle.residuals[name] <= 1e-9, name
        p1_top = 2.0 * cfg.nu * d1(bundle.V[:, 0], grid)[..., -1] + bundle.F3_tilde[:, 0]
        assert np.array_equal(bundle.P1[..., -1], p1_top)

    def test_shape_mismatch(self, cfg, grid, rng):
        F1, F2, F3 = self._data(grid, 5, rng)
        with pytest.raises(ValueError, match="grid mismatch"):
            assemble_corrector(F1[:4], F2, F3, np.zeros((3,) + grid.shape), grid, cfg.dt, cfg.nu)
