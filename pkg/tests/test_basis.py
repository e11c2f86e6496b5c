import math

import numpy as np
import pytest

from vmdg.basis import (
    DGMeshOperators,
    HermiteBasis,
    LegendreBasis,
    build_velocity_coupling,
    characteristic_split,
    gauss_hermite,
    hermite_aw_eval,
    hermite_aw_table,
    hermite_dual_eval,
    hermite_dual_table,
    legendre_cell_eval,
    mode_mass,
    project_shifted_maxwellian,
    project_to_dg,
)
from vmdg.state import MeshSpec, SpeciesSpec

from oracles import velocity_matrices


BASIS = HermiteBasis((12, 12, 12), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))


class TestHermiteFunctions:
    def test_psi0_at_origin(self):
        assert hermite_aw_eval(BASIS, 0, 0.0) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-15)

    def test_psi1_at_origin(self):
        assert hermite_aw_eval(BASIS, 1, 0.0) == 0.0

    def test_dual0_is_constant(self):
        xi = np.linspace(-4, 4, 17)
        assert np.all(hermite_dual_table(0, xi)[0] == 1.0)

    def test_psi0_integrates_to_one(self):
        xi, w = gauss_hermite(20)
        val = np.sum(w * hermite_aw_table(0, xi)[0] * np.exp(xi**2))
        assert val == pytest.approx(1.0, abs=1e-14)

    def test_dual_pairings(self):
        xi, w = gauss_hermite(24)
        tr = hermite_aw_table(2, xi) * np.exp(xi**2)
        du = hermite_dual_table(2, xi)
        assert np.sum(w * tr[1] * du[1]) == pytest.approx(1.0, abs=1e-13)
        assert np.sum(w * tr[2] * du[0]) == pytest.approx(0.0, abs=1e-13)

    def test_duality_matrix_to_order_12(self):
        n = 12
        xi, w = gauss_hermite(2 * n + 2)
        tr = hermite_aw_table(n, xi) * np.exp(xi**2)
        du = hermite_dual_table(n, xi)
        D = np.einsum("iq,jq,q->ij", tr, du, w)
        assert np.abs(D - np.eye(n + 1)).max() < 1e-12

    def test_order_out_of_range(self):
        with pytest.raises(IndexError):
            hermite_aw_eval(BASIS, 13, 0.0)
        with pytest.raises(IndexError):
            hermite_dual_eval(BASIS, -1, 0.0)


class TestLegendre:
    def test_orthogonality_normalization(self):
        lb = LegendreBasis(3)
        t, w = lb.nodes_weights()
        V = lb.eval_table(t)
        M = np.einsum("iq,jq,q->ij", V, V, w)
        assert np.abs(M - np.diag(lb.mass_1d())).max() < 1e-14

    def test_cell_eval_constant_mode(self):
        mesh = MeshSpec((4, 1, 1), (2.0, 1.0, 1.0), dg_degree=1)
        assert legendre_cell_eval(mesh, (0, 0, 0), (2, 0, 0), (1.3, 0.5, 0.5)) == 1.0

    def test_cell_eval_linear_mode_at_center(self):
        mesh = MeshSpec((4, 1, 1), (2.0, 1.0, 1.0), dg_degree=1)
        assert legendre_cell_eval(mesh, (1, 0, 0), (2, 0, 0), (1.25, 0.5, 0.5)) == pytest.approx(0.0, abs=1e-14)

    def test_cell_eval_outside_cell(self):
        mesh = MeshSpec((4, 1, 1), (2.0, 1.0, 1.0), dg_degree=1)
        with pytest.raises(ValueError):
            legendre_cell_eval(mesh, (0, 0, 0), (0, 0, 0), (1.7, 0.5, 0.5))

    def test_mesh_mass_matrix_diagonal(self):
        mesh = MeshSpec((3, 2, 1), (2.0, 1.5, 1.0), dg_degree=2)
        ops = DGMeshOperators(mesh)
        # quadrature-assembled full mass matrix must be diagonal
        lb = [LegendreBasis(d) for d in mesh.axis_degrees]
        per = []
        for ax, b in enumerate(lb):
            t, w = b.nodes_weights()
            V = b.eval_table(t)
            per.append(np.einsum("iq,jq,q->ij", V, V, w) * mesh.dx[ax] / 2.0)
        full = np.einsum("ia,jb,kc->ijkabc", *per).reshape(ops.n_modes, ops.n_modes)
        assert np.abs(full - np.diag(ops.mass)).max() < 1e-14
        assert np.allclose(ops.mass, mode_mass(mesh), rtol=0, atol=1e-15)


class TestVelocityCoupling:
    def test_ladder_coefficient_against_quadrature(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (5, 5, 5), (1.0, 1.0, 1.0))
        cpl = build_velocity_coupling(sp)
        # v psi_0 = (1/sqrt2) psi_1 for u=0, alpha=1
        assert cpl.flux[0][1, 0] == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)
        _, V, _ = velocity_matrices(5, 1.0, 0.0)
        assert np.abs(cpl.flux[0] - V).max() < 1e-12

    def test_shift_is_diagonal(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (4, 4, 4), (1.3, 1.0, 1.0), (2.0, 0.0, 0.0))
        cpl = build_velocity_coupling(sp)
        assert np.allclose(np.diag(cpl.flux[0]), 2.0)

    def test_truncation_drops_raising_term(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (3, 3, 3), (1.0, 1.0, 1.0))
        cpl = build_velocity_coupling(sp)
        assert cpl.flux[0].shape == (4, 4)  # no row/column beyond the max order

    @pytest.mark.parametrize("order", [3, 6, 9])
    def test_matches_quadrature_to_1e12(self, order):
        sp = SpeciesSpec("e", 1.0, -1.0, (order,) * 3, (0.7, 1.1, 2.0), (0.4, -0.3, 0.0))
        cpl = build_velocity_coupling(sp)
        for ax in range(3):
            _, V, _ = velocity_matrices(order, sp.alpha[ax], sp.shift[ax])
            assert np.abs(cpl.flux[ax] - V).max() < 1e-12

    def test_split_identity_and_psd(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (6, 6, 6), (1.0, 1.0, 1.0), (0.5, 0, 0))
        cpl = build_velocity_coupling(sp)
        for ax in range(3):
            T, tp, tm, ta = cpl.flux[ax], cpl.flux_plus[ax], cpl.flux_minus[ax], cpl.flux_abs[ax]
            assert np.abs(tp + tm - T).max() < 1e-13
            assert np.abs(ta - (tp - tm)).max() < 1e-13
            ev = np.linalg.eigvalsh(ta)
            assert ev.min() > -1e-13

    def test_split_sign_convention_reproducible(self):
        T = np.diag([1.0, -1.0]) + 0.3 * np.ones((2, 2))
        a = characteristic_split(T)
        b = characteristic_split(T.copy())
        for x, y in zip(a, b):
            assert np.array_equal(x, y)


class TestMaxwellianProjection:
    def test_matched_basis_is_lowest_mode(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (4, 4, 4), (0.8, 1.0, 1.2), (0.1, -0.2, 0.0))
        vth = tuple(a / math.sqrt(2.0) for a in sp.alpha)
        C = project_shifted_maxwellian(sp, density=2.0, bulk_velocity=sp.shift, thermal=vth)
        assert C[0, 0, 0] == pytest.approx(2.0 / np.prod(sp.alpha), rel=1e-13)
        rest = C.copy()
        rest[0, 0, 0] = 0.0
        assert np.abs(rest).max() < 1e-13 * abs(C[0, 0, 0])

    def test_zero_density(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (3, 3, 3), (1.0, 1.0, 1.0))
        C = project_shifted_maxwellian(sp, 0.0, (0, 0, 0), (0.5, 0.5, 0.5))
        assert np.all(C == 0.0)

    def test_small_shift_first_mode_ratio(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (6, 6, 6), (1.0, 1.0, 1.0))
        U = 0.05
        C = project_shifted_maxwellian(
            sp, 1.0, (U, 0.0, 0.0), (1.0 / math.sqrt(2.0),) * 3, n_quad=12
        )
        # exact projection gives C_100/C_000 = sqrt(2) U / alpha_x
        assert C[1, 0, 0] / C[0, 0, 0] == pytest.approx(math.sqrt(2.0) * U, rel=1e-10)

    def test_moment_recovery_when_matched(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (5, 5, 5), (0.9, 1.1, 1.4), (0.2, 0.0, -0.1))
        vth = tuple(a / math.sqrt(2.0) for a in sp.alpha)
        dens = 1.7
        C = project_shifted_maxwellian(sp, dens, sp.shift, vth)
        pa = float(np.prod(sp.alpha))
        # density = prod(alpha) C_000
        assert pa * C[0, 0, 0] == pytest.approx(dens, rel=1e-10)
        # bulk velocity from the first moments: n u_b = pa (u_b C_000 + a_b C_1/sqrt2)
        for b, e_b in enumerate(np.eye(3, dtype=int)):
            mom = pa * (sp.shift[b] * C[0, 0, 0] + sp.alpha[b] / math.sqrt(2) * C[tuple(e_b)])
            assert mom == pytest.approx(dens * sp.shift[b], rel=0, abs=1e-10 * dens)
        # thermal energy along x: int v_x^2 f = n (u^2 + vT^2)
        two = (2, 0, 0)
        mom2 = pa * (
            (sp.shift[0] ** 2 + sp.alpha[0] ** 2 / 2.0) * C[0, 0, 0]
            + math.sqrt(2.0) * sp.shift[0] * sp.alpha[0] * C[1, 0, 0]
            + sp.alpha[0] ** 2 / math.sqrt(2.0) * C[two]
        )
        assert mom2 == pytest.approx(dens * (sp.shift[0] ** 2 + vth[0] ** 2), rel=1e-10)

    def test_thermal_must_be_positive(self):
        sp = SpeciesSpec("e", 1.0, -1.0, (3, 3, 3), (1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            project_shifted_maxwellian(sp, 1.0, (0, 0, 0), (0.0, 0.5, 0.5))


class TestProjectToDG:
    def test_projects_polynomials_exactly(self):
        mesh = MeshSpec((3, 2, 1), (2.0, 1.0, 1.0), dg_degree=1)
        coefs = project_to_dg(mesh, lambda X, Y, Z: 2.0 + 0.0 * X)
        assert coefs[..., 0] == pytest.approx(2.0)
        assert np.abs(coefs[..., 1:]).max() < 1e-14

    def test_projection_is_l2_optimal_for_cos(self):
        mesh = MeshSpec((16, 1, 1), (2.0 * math.pi, 1.0, 1.0), dg_degree=1)
        coefs = project_to_dg(mesh, lambda X, Y, Z: np.cos(X))
        # mode-0 coefficient = cell average of cos
        ops = DGMeshOperators(mesh)
        dx = mesh.dx[0]
        lo = np.arange(16) * dx
        avg = (np.sin(lo + dx) - np.sin(lo)) / dx
        assert np.abs(coefs[:, 0, 0, 0] - avg).max() < 1e-13
