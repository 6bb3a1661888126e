import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from substruct.cms_dcb import (
    dcb_assemble,
    dcb_couple,
    dcb_eigenvalues,
    dcb_expand,
    dcb_reduce,
    dual_eig,
    generalized_inverse,
    signed_boolean_maps,
)
from substruct.errors import DomainError
from substruct.modal import mac_matrix
from substruct.model import apply_damage

from conftest import rel

# largest relative interface gap |B u| / |u_b| of the 10+10 basis, frozen
# from the first run (1.74e-2) with headroom
GAP_BOUND_10 = 2e-2


class TestBasis:
    def test_rigid_mode_counts(self, dcb_assembly):
        assert dcb_assembly.lower.n_rigid == 0
        assert dcb_assembly.upper.n_rigid == 6

    def test_rigid_modes_are_stress_free(self, dcb_assembly):
        upper = dcb_assembly.upper
        K = upper.substructure.stiffness
        assert np.linalg.norm(K @ upper.rigid_modes) <= 1e-8 * np.linalg.norm(K) * np.linalg.norm(upper.rigid_modes)

    def test_keep_all_has_no_residual_flexibility(self, tower):
        lower, upper, _ = tower
        assert not np.any(dcb_reduce(lower, 120).residual_flexibility)
        assert not np.any(dcb_reduce(upper, 120).residual_flexibility)

    def test_residual_flexibility_complements_kept_modes(self, tower):
        lower = tower[0]
        basis = dcb_reduce(lower, 10)
        phi, lam = basis.free_modes, basis.kept_eigenvalues
        full = np.linalg.inv(lower.stiffness)
        F = basis.residual_flexibility + (phi / lam) @ phi.T
        assert np.linalg.norm(F - full) <= 1e-10 * np.linalg.norm(full)

    @pytest.mark.parametrize("n", [0, 121])
    def test_mode_count_range(self, tower, n):
        with pytest.raises(DomainError):
            dcb_reduce(tower[1], n)

    def test_signed_boolean(self, tower):
        B1, B2 = signed_boolean_maps(*tower)
        assert B1.shape == (6, 120) and B2.shape == (6, 126)
        assert np.all(B1.sum(axis=1) == 1) and np.all(B2.sum(axis=1) == -1)


class TestGeneralizedInverse:
    @pytest.mark.parametrize("theta", [0.5, 2.0])
    @pytest.mark.parametrize("side", [0, 1])
    def test_inverse_scaling(self, tower, side, theta):
        sub = tower[side]
        G = generalized_inverse(sub.stiffness, sub.mass)
        G_theta = generalized_inverse(theta * sub.stiffness, sub.mass)
        assert np.linalg.norm(G_theta - G / theta) <= 1e-10 * np.linalg.norm(G / theta)

    def test_nonsingular_is_inverse(self, tower):
        lower = tower[0]
        G = generalized_inverse(lower.stiffness, lower.mass)
        inv = np.linalg.inv(lower.stiffness)
        assert np.linalg.norm(G - inv) <= 1e-9 * np.linalg.norm(inv)


class TestDualEig:
    def test_positive_definite_mass(self):
        lam, vec = dual_eig(np.diag([1.0, 4.0]), np.eye(2))
        assert lam == pytest.approx([1.0, 4.0])

    def test_multiplier_constraint(self):
        # two unit masses tied by a multiplier: only the in-phase mode survives
        K = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, -1.0], [1.0, -1.0, 0.0]])
        M = np.diag([1.0, 1.0, 0.0])
        lam, vec = dual_eig(K, M)
        assert lam == pytest.approx([1.0])
        assert vec[0, 0] == pytest.approx(vec[1, 0])


class TestAssembly:
    def test_lossless_limit(self, lossless, full_modes):
        _, dcb = lossless
        lam = dcb_eigenvalues(dcb.at((1.0, 1.0)), 10).eigenvalues
        assert np.max(rel(lam, full_modes.eigenvalues[:10])) <= 1e-9

    def test_lossless_shapes(self, lossless, full_modes):
        modes = lossless[1].at((1.0, 1.0)).physical_modes(10)
        mac = np.diag(mac_matrix(modes.mode_shapes, full_modes.mode_shapes[:, :10]))
        assert np.all(np.abs(mac - 1) <= 1e-9)

    def test_ten_mode_shapes(self, dcb_assembly, full_modes):
        modes = dcb_assembly.at((1.0, 1.0)).physical_modes(10)
        mac = np.diag(mac_matrix(modes.mode_shapes, full_modes.mode_shapes[:, :10]))
        assert mac.min() >= 0.999

    def test_beats_cb_at_equal_basis(self, dcb_assembly, cb_assembly, full_modes):
        lam_ref = full_modes.eigenvalues[:10]
        err_dcb = rel(dcb_assembly.at((1, 1)).eigenpairs(10).eigenvalues, lam_ref)
        err_cb = rel(cb_assembly.at((1, 1)).eigenpairs(10).eigenvalues, lam_ref)
        assert np.all(err_dcb <= err_cb)

    def test_fidelity_regression(self, dcb_assembly, cb_assembly, full_modes):
        # frozen from the first oracle run: 3.118e-3 (CB) and 2.283e-4 (DCB)
        lam_ref = full_modes.eigenvalues[:10]
        assert rel(cb_assembly.at((1, 1)).eigenpairs(10).eigenvalues, lam_ref).max() <= 3.2e-3
        assert rel(dcb_assembly.at((1, 1)).eigenpairs(10).eigenvalues, lam_ref).max() <= 2.35e-4

    def test_filter_bookkeeping(self, dcb_assembly):
        system = dcb_assembly.at((0.75, 1.0))
        lam, _, physical = dcb_assembly.spectrum(system)
        info = system.eigenpairs(10).info
        assert info["n_solved"] == lam.size == system.n_dofs
        assert info["n_filtered"] + int(physical.sum()) == info["n_solved"]


class TestParameterisedAssembly:
    def test_unit_theta_is_undamaged(self, tower, dcb_assembly):
        lower, upper, interface = tower
        fresh = dcb_assemble(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface, (1.0, 1.0))
        ref = dcb_assembly.at((1.0, 1.0))
        assert np.array_equal(fresh.stiffness, ref.stiffness)
        assert np.array_equal(fresh.mass, ref.mass)

    def test_uniform_scaling(self, dcb_assembly):
        lam0 = dcb_assembly.at((1.0, 1.0)).eigenpairs(10).eigenvalues
        lam = dcb_assembly.at((0.75, 0.75)).eigenpairs(10).eigenvalues
        assert np.max(rel(lam, 0.75 * lam0)) <= 1e-10

    def test_matches_from_scratch(self, tower, dcb_assembly):
        lower, upper, interface = tower
        fresh = dcb_assemble(dcb_reduce(lower, 10), dcb_reduce(apply_damage(upper, 0.75), 10), interface,
                             (1.0, 1.0))
        lam = dcb_assembly.at((1.0, 0.75)).eigenpairs(10).eigenvalues
        assert np.max(rel(lam, dcb_eigenvalues(fresh, 10).eigenvalues)) <= 1e-8

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.4, 1.6), st.floats(0.4, 1.6))
    def test_reduction_matrix_congruence(self, tower, dcb_assembly, t1, t2):
        # K_theta equals T_theta^T [blockdiag(theta_i K_i), B^T; B, 0] T_theta
        lower, upper, _ = tower
        T = dcb_assembly.reduction_matrix((t1, t2))
        n1, n2 = lower.n_dofs, upper.n_dofs
        B = np.hstack([dcb_assembly.B1, dcb_assembly.B2])
        K = np.zeros((n1 + n2 + 6, n1 + n2 + 6))
        K[:n1, :n1] = t1 * lower.stiffness
        K[n1:n1 + n2, n1:n1 + n2] = t2 * upper.stiffness
        K[n1 + n2:, :n1 + n2] = B
        K[:n1 + n2, n1 + n2:] = B.T
        expected = T.T @ K @ T
        got = dcb_assembly.at((t1, t2)).stiffness
        assert np.linalg.norm(got - expected) <= 1e-10 * np.linalg.norm(expected)


class TestExpansion:
    def test_rigid_body_only(self, tower, dcb_assembly):
        upper = dcb_assembly.upper
        system = dcb_assembly.at((1.0, 1.0))
        translation = np.array([1.0 if kind == "ux" else 0.0 for _, kind in upper.substructure.dof_labels])
        alpha = np.linalg.lstsq(upper.rigid_modes, translation, rcond=None)[0]
        x = np.zeros(system.n_dofs)
        x[dcb_assembly.g2[:6]] = alpha
        _, u2 = dcb_expand(system, x)
        assert np.max(np.abs(u2 - translation)) <= 1e-10

    def test_lossless_compatibility(self, lossless):
        dcb = lossless[1]
        system = dcb.at((1.0, 1.0))
        u1, u2 = system.expand(system.eigenpairs(10).mode_shapes)
        gap = np.linalg.norm(dcb.compatibility(u1, u2), axis=0)
        assert np.all(gap <= 1e-8 * np.linalg.norm(u1, axis=0))

    def test_ten_mode_compatibility(self, tower, dcb_assembly):
        system = dcb_assembly.at((1.0, 1.0))
        u1, u2 = system.expand(system.eigenpairs(10).mode_shapes)
        gap = np.linalg.norm(dcb_assembly.compatibility(u1, u2), axis=0)
        assert np.all(gap <= GAP_BOUND_10 * np.linalg.norm(u1[list(tower[2].lower)], axis=0))
