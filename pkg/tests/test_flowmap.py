"""Tests for the flow-map kinematics and Lagrangian operators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slabwave.flowmap import (
    DegenerateFlowMap,
    det3,
    jacobian_expansion,
    kinematic_identity_residuals,
    kinematics,
    kinematics_from_gradient,
    lagrangian_operators,
    piola_residual,
)
from slabwave.grid import Config, div, grad_vector, make_grid, to_physical, to_spectral
from slabwave.samples import horizontal_coordinates, random_volume_field

small_gradients = arrays(np.float64, (3, 3, 4), elements=st.floats(-0.4, 0.4, allow_nan=False))


class TestKinematics:
    """Deformation gradient, cofactor and Jacobian."""

    def test_zero_displacement_is_identity(self, grid):
        kin = kinematics(np.zeros((3,) + grid.shape, complex), grid)
        eye = np.eye(3)[:, :, None, None, None]
        assert np.array_equal(kin.Deta, np.broadcast_to(eye, kin.Deta.shape))
        assert np.allclose(kin.Amat, eye) and np.allclose(kin.cof, eye)
        assert np.all(kin.J == 1.0)
        assert np.allclose(kin.Nvec, np.array([1.0, 0.0, 0.0])[:, None, None])

    def test_horizontal_shear_of_vertical_component(self, grid):
        eps = 0.3
        y2, _, x = horizontal_coordinates(grid)
        xi = to_spectral(np.stack([eps * np.sin(y2), np.zeros_like(x), np.zeros_like(x)]))
        kin = kinematics(xi, grid)
        assert np.max(np.abs(kin.J - 1.0)) <= 1e-13
        # d_2 xi^1 = eps cos y2 enters the inverse transpose as -eps cos y2
        assert np.max(np.abs(kin.Amat[1, 0] + eps * np.cos(y2))) <= 1e-13
        assert np.max(np.abs(kin.Amat[0, 0] - 1.0)) <= 1e-13

    def test_inverse_transpose_against_numpy(self, grid, rng):
        kin = kinematics(random_volume_field(grid, rng, amplitude=0.005), grid)
        prod = np.einsum("ki...,kj...->ij...", kin.Amat, kin.Deta)
        assert np.max(np.abs(prod - np.eye(3)[:, :, None, None, None])) <= 1e-12
        pts = np.moveaxis(kin.Deta.reshape(3, 3, -1), -1, 0)
        assert np.allclose(np.linalg.det(pts), kin.J.reshape(-1), atol=1e-13)

    def test_folded_map_raises_with_reciprocal_jacobian(self, grid):
        x = grid.x1
        xi = np.zeros((3,) + grid.shape, complex)
        xi[0, 0, 0] = -0.95 * (x + 1.0)
        with pytest.raises(DegenerateFlowMap) as info:
            kinematics(xi, grid)
        assert info.value.j_min_found == pytest.approx(0.05)
        assert info.value.j_inv_max == pytest.approx(20.0)
        assert "||1/J||" in str(info.value)

    def test_floor_override(self, grid):
        xi = np.zeros((3,) + grid.shape, complex)
        xi[0, 0, 0] = -0.95 * (grid.x1 + 1.0)
        assert kinematics(xi, grid, j_min=0.0).j_inv_max == pytest.approx(20.0)


class TestJacobianExpansion:
    """Polynomial expansion of det(I + grad xi)."""

    def test_zero_and_constant_displacements(self, grid):
        assert np.all(jacobian_expansion(np.zeros((3, 3, 5))) == 1.0)
        xi = np.zeros((3,) + grid.shape, complex)
        xi[:, 0, 0, :] = np.array([0.2, -0.1, 0.4])[:, None]
        assert np.allclose(kinematics(xi, grid).J, 1.0, atol=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(small_gradients)
    def test_matches_determinant(self, g):
        deta = np.swapaxes(g, 0, 1) + np.eye(3)[:, :, None]
        assert np.max(np.abs(det3(deta) - jacobian_expansion(g))) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(small_gradients)
    def test_cofactor_satisfies_adjugate_identity(self, g):
        kin = kinematics_from_gradient(g)
        prod = np.einsum("ik...,jk...->ij...", kin.cof, kin.Deta)
        assert np.max(np.abs(prod - kin.J * np.eye(3)[:, :, None])) <= 1e-12


class TestLagrangianOperators:
    """Operators with the inverse-transpose coefficients."""

    def test_identity_map_gives_flat_operators(self, grid, rng):
        kin = kinematics(np.zeros((3,) + grid.shape, complex), grid)
        v = random_volume_field(grid, rng)
        ops = lagrangian_operators(kin, v, grid)
        assert np.max(np.abs(ops["div_A"] - to_physical(div(v, grid)))) <= 1e-12
        gv = grad_vector(v, grid)
        assert np.max(np.abs(ops["sym_grad_A"] - to_physical(gv + np.swapaxes(gv, 0, 1)))) <= 1e-12

    def test_laplacian_of_constant_vanishes(self, grid, rng):
        kin = kinematics(random_volume_field(grid, rng, amplitude=0.005), grid)
        const = to_spectral(np.full(grid.shape, 3.0))
        ops = lagrangian_operators(kin, const, grid)
        assert np.max(np.abs(ops["lap_A"])) <= 1e-12
        assert np.max(np.abs(ops["grad_A"])) <= 1e-12

    def test_conservative_form_agrees_to_discretization_error(self):
        """J div_A v equals d_j(a_ij v^i) up to the Piola defect."""
        errs = []
        for nv in (17, 33):
            grid = make_grid(Config(modes=(8, 8), nv=nv))
            y2, y3, x = horizontal_coordinates(grid)
            xi = to_spectral(0.1 * np.stack([np.sin(y2) * np.cos(x), np.cos(y3) * x, np.sin(y2 + y3) * np.exp(x)]))
            v = to_spectral(np.stack([np.cos(y3) * np.sin(x), np.sin(y2) * x * x, np.cos(y2) * np.exp(x)]))
            kin = kinematics(xi, grid)
            lhs = kin.J * lagrangian_operators(kin, v, grid, dealias=False)["div_A"]
            flux = to_spectral(np.einsum("ij...,i...->j...", kin.cof, to_physical(v)))
            rhs = to_physical(div(flux, grid))
            errs.append(np.max(np.abs(lhs - rhs)[..., 1:-1]))
        assert errs[1] < errs[0] / 3.0


class TestIdentityResiduals:
    """Piola and time-derivative identities."""

    def test_zero_fields(self, grid):
        z = np.zeros((3,) + grid.shape, complex)
        res = kinematic_identity_residuals((z, z), 0.1, z, grid)
        assert res == {"piola": 0.0, "dA_dt": 0.0, "dJ_dt": 0.0}

    def test_piola_second_order(self):
        errs = []
        for nv in (17, 33, 65):
            grid = make_grid(Config(modes=(8, 8), nv=nv))
            y2, y3, x = horizontal_coordinates(grid)
            xi = to_spectral(0.1 * np.stack([np.sin(y2) * np.cos(2 * x), np.cos(y3) * np.sin(x + y2), np.sin(y2 + y3) * np.exp(x)]))
            errs.append(np.max(np.abs(piola_residual(kinematics(xi, grid), grid))))
        assert np.all(np.log2(np.array(errs[:-1]) / np.array(errs[1:])) >= 1.8)

    def test_linear_in_time_displacement(self, grid):
        """xi(t) = t w with v = w; the residual shrinks with the time step."""
        y2, y3, x = horizontal_coordinates(grid)
        w = to_spectral(0.2 * np.stack([np.sin(y2) * (x + 1.0), np.cos(y3) * x, np.sin(y2 + y3)]))
        out = []
        for dt in (0.02, 0.01):
            res = kinematic_identity_residuals((0.5 * w, (0.5 + dt) * w), dt, w, grid)
            out.append(res)
        for name in ("dA_dt", "dJ_dt"):
            assert out[1][name] <= 1e-3
            assert out[1][name] < out[0][name] / 3.0
