"""Dual Craig-Bampton reduction and dual (Lagrange multiplier) assembly.

Each substructure keeps its rigid-body modes, a set of free-interface
modes and residual-flexibility attachment modes ``-F_i B_i^T``. The
interface forces ``mu`` stay in the reduced coordinates, so the reduced
stiffness is a saddle-point matrix and is generally indefinite.

Scaling a substructure stiffness by theta leaves its mode shapes alone,
scales its eigenvalues by theta and its residual flexibility by 1/theta.
The assembly caches every block product at theta = 1 and applies those
factors when a new damage state is requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import AssemblyError, DomainError, FactorizationError, SolverError
from .modal import ModalData, fix_signs
from .model import as_damage_state, global_layout
from .reduction import ReducedSystem
from .spectral import RIGID_TOL, count_rigid_modes

MULTIPLIER_FRACTION_MAX = 0.9


def _full_spectrum(K, M):
    try:
        lam, phi = la.eigh(K, M)
    except la.LinAlgError as exc:
        raise FactorizationError(f"mass matrix is not positive definite: {exc}") from None
    return lam, phi


def generalized_inverse(K, M):
    """Spectral generalized inverse ``K^+ = sum_flex phi phi^T / lambda``.

    Mode shapes are mass-normalized, so rigid-body content is projected out
    in the mass metric. For a nonsingular ``K`` this is ``K^{-1}``.
    """
    lam, phi = _full_spectrum(K, M)
    n_rbm = count_rigid_modes(lam)
    flex = phi[:, n_rbm:]
    G = (flex / lam[n_rbm:]) @ flex.T
    return 0.5 * (G + G.T)


@dataclass(frozen=True, eq=False)
class DcbBasis:
    """Dual Craig-Bampton basis of one substructure at theta = 1."""

    rigid_modes: np.ndarray
    free_modes: np.ndarray
    kept_eigenvalues: np.ndarray
    residual_flexibility: np.ndarray
    substructure: object

    @property
    def n_rigid(self):
        return self.rigid_modes.shape[1]

    @property
    def n_kept(self):
        return self.free_modes.shape[1]

    @property
    def boundary_dofs(self):
        return self.substructure.boundary_dofs


def dcb_reduce(sub, n_modes):
    """Rigid, free-interface and residual-flexibility data of ``sub``.

    ``F_0`` is assembled from the discarded flexible modes,
    ``sum phi_k phi_k^T / lambda_k``, which equals ``K^+`` minus the
    contribution of the kept modes without the cancellation of a
    subtraction.

    Raises
    ------
    DomainError
        ``n_modes`` < 1 or larger than the number of flexible modes.
    """
    lam, phi = _full_spectrum(sub.stiffness, sub.mass)
    n_rbm = count_rigid_modes(lam)
    n_flex = lam.size - n_rbm
    if not 1 <= n_modes <= n_flex:
        raise DomainError(f"n_modes must lie in [1, {n_flex}] flexible modes, got {n_modes}")
    kept = slice(n_rbm, n_rbm + n_modes)
    discarded = phi[:, n_rbm + n_modes:]
    F = (discarded / lam[n_rbm + n_modes:]) @ discarded.T
    return DcbBasis(
        rigid_modes=phi[:, :n_rbm],
        free_modes=fix_signs(phi[:, kept]),
        kept_eigenvalues=lam[kept],
        residual_flexibility=0.5 * (F + F.T),
        substructure=sub,
    )


def signed_boolean_maps(lower, upper, interface):
    """``B_1`` (+1 entries) and ``B_2`` (-1 entries), one row per interface pair."""
    n_lambda = len(interface)
    B1 = np.zeros((n_lambda, lower.n_dofs))
    B2 = np.zeros((n_lambda, upper.n_dofs))
    for k, (i1, i2) in enumerate(interface.pairs):
        B1[k, i1] = 1.0
        B2[k, i2] = -1.0
    return B1, B2


class _SideBlocks:
    """Cached block products of one substructure at theta = 1."""

    def __init__(self, basis, B):
        sub = basis.substructure
        K, M = sub.stiffness, sub.mass
        self.G = np.hstack([basis.rigid_modes, basis.free_modes])
        self.A = -basis.residual_flexibility @ B.T
        self.B = B
        self.K_gg = self.G.T @ K @ self.G
        self.K_ga = self.G.T @ K @ self.A
        self.K_aa = self.A.T @ K @ self.A
        self.M_gg = self.G.T @ M @ self.G
        self.M_ga = self.G.T @ M @ self.A
        self.M_aa = self.A.T @ M @ self.A
        self.C_g = self.G.T @ B.T
        self.C_a = self.A.T @ B.T


class DcbAssembly:
    """Dual coupling of two DCB bases.

    Reduced coordinates are ordered ``[alpha1, alpha2, q1, q2, mu]``.
    """

    method = "DCB"

    def __init__(self, lower, upper, interface):
        sub1, sub2 = lower.substructure, upper.substructure
        interface.check(sub1, sub2)
        self.lower = lower
        self.upper = upper
        self.interface = interface
        self.layout = global_layout(sub1, sub2, interface)
        self.B1, self.B2 = signed_boolean_maps(sub1, sub2, interface)
        self.n_lambda = len(interface)

        r1, r2, k1, k2 = lower.n_rigid, upper.n_rigid, lower.n_kept, upper.n_kept
        self.n_reduced = r1 + r2 + k1 + k2 + self.n_lambda
        # positions of each side's [rigid, free] columns in the reduced layout
        self.g1 = np.r_[np.arange(r1), r1 + r2 + np.arange(k1)]
        self.g2 = np.r_[r1 + np.arange(r2), r1 + r2 + k1 + np.arange(k2)]
        self.mu = np.arange(r1 + r2 + k1 + k2, self.n_reduced)
        self._sides = (_SideBlocks(lower, self.B1), _SideBlocks(upper, self.B2))

    def reduction_matrix(self, theta=(1.0, 1.0)):
        """Reduction matrix ``T_theta`` mapping reduced coordinates to ``[u1; u2; mu]``."""
        theta = as_damage_state(theta)
        s1, s2 = self._sides
        n1, n2 = s1.G.shape[0], s2.G.shape[0]
        T = np.zeros((n1 + n2 + self.n_lambda, self.n_reduced))
        T[:n1, self.g1] = s1.G
        T[n1:n1 + n2, self.g2] = s2.G
        T[:n1, self.mu] = s1.A / theta[0]
        T[n1:n1 + n2, self.mu] = s2.A / theta[1]
        T[n1 + n2:, self.mu] = np.eye(self.n_lambda)
        return T

    def at(self, theta):
        """Reduced dual system with stiffnesses scaled by ``theta``."""
        theta = as_damage_state(theta)
        n = self.n_reduced
        K = np.zeros((n, n))
        M = np.zeros((n, n))
        mu = self.mu
        for t, g, s in zip(theta, (self.g1, self.g2), self._sides):
            a = 1.0 / t
            K[np.ix_(g, g)] += t * s.K_gg
            K[np.ix_(g, mu)] += s.K_ga + s.C_g
            K[np.ix_(mu, g)] += (s.K_ga + s.C_g).T
            K[np.ix_(mu, mu)] += a * (s.K_aa + s.C_a + s.C_a.T)
            M[np.ix_(g, g)] += s.M_gg
            M[np.ix_(g, mu)] += a * s.M_ga
            M[np.ix_(mu, g)] += a * s.M_ga.T
            M[np.ix_(mu, mu)] += a * a * s.M_aa
        return ReducedSystem("DCB", 0.5 * (K + K.T), 0.5 * (M + M.T), theta.theta, self)

    def multiplier_fraction(self, system, vectors):
        """Share of each mode's kinetic energy carried by the attachment part."""
        x = np.asarray(vectors)
        xm = x[self.mu]
        M = system.mass
        part = np.einsum("ij,ij->j", xm, M[np.ix_(self.mu, self.mu)] @ xm)
        total = np.einsum("ij,ij->j", x, M @ x)
        return part / total

    def spectrum(self, system):
        """All eigenpairs of the dual pair plus a physical-mode mask.

        Returns ``(eigenvalues, vectors, physical)`` with vectors normalized
        to unit reduced mass.
        """
        lam, vec = dual_eig(system.stiffness, system.mass)
        positive = lam[lam > 0]
        if positive.size == 0:
            raise SolverError("dual reduced system has no positive eigenvalues")
        cutoff = RIGID_TOL * positive.min()
        fraction = self.multiplier_fraction(system, vec)
        physical = (lam > cutoff) & (fraction <= MULTIPLIER_FRACTION_MAX)
        if self.lower.substructure.constrained or self.upper.substructure.constrained:
            physical &= lam > cutoff
        return lam, vec, physical

    def eigenpairs(self, system, n):
        lam, vec, physical = self.spectrum(system)
        idx = np.flatnonzero(physical)
        if idx.size < n:
            raise SolverError(f"only {idx.size} physical modes recovered, {n} requested ({n - idx.size} short)")
        take = idx[:n]
        info = {"n_solved": lam.size, "n_filtered": int(lam.size - idx.size)}
        return ModalData(lam[take], fix_signs(vec[:, take]), (), info)

    def expand(self, system, reduced_shapes):
        x = np.asarray(reduced_shapes)
        theta = system.theta
        s1, s2 = self._sides
        u1 = s1.G @ x[self.g1] + (s1.A / theta[0]) @ x[self.mu]
        u2 = s2.G @ x[self.g2] + (s2.A / theta[1]) @ x[self.mu]
        return u1, u2

    def compatibility(self, u_lower, u_upper):
        """Interface gap ``B_1 u_1 + B_2 u_2``."""
        return self.B1 @ u_lower + self.B2 @ u_upper


def dual_eig(K, M, tol=1e-12):
    """Finite eigenpairs of a symmetric pencil with positive semidefinite ``M``.

    Massless directions are condensed out: where ``K`` is nonsingular on
    them they are eliminated statically, and where it vanishes they act as
    Lagrange multipliers whose constraints restrict the remaining
    coordinates. When ``M`` is positive definite this is a plain
    symmetric-definite solve.

    Returns all finite eigenvalues ascending and eigenvectors in the
    original coordinates, normalized to ``x^T M x = 1``.
    """
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    try:
        la.cholesky(M, lower=True)
        lam, vec = la.eigh(K, M)
        return lam, vec
    except la.LinAlgError:
        pass

    mu, V = la.eigh(M)
    big = mu > tol * np.abs(mu).max()
    P, N = V[:, big], V[:, ~big]
    K_pp = P.T @ K @ P
    K_np = N.T @ K @ P
    A = N.T @ K @ N
    a, U = la.eigh(A)
    scale = max(np.abs(a).max(initial=0.0), la.norm(K_pp, 2))
    stiff = np.abs(a) > tol * scale
    U1, U0 = U[:, stiff], U[:, ~stiff]

    # static condensation of massless but stiff directions
    C1 = U1.T @ K_np
    K_c = K_pp - C1.T @ (C1 / a[stiff][:, None])
    # remaining massless directions carry constraints G y = 0
    G = U0.T @ K_np
    if G.shape[0]:
        Z = la.null_space(G, rcond=tol)
    else:
        Z = np.eye(P.shape[1])
    M_pp = P.T @ M @ P
    lam, w = la.eigh(Z.T @ K_c @ Z, Z.T @ M_pp @ Z)
    y = Z @ w
    z = -U1 @ ((C1 @ y) / a[stiff][:, None])
    x = P @ y + N @ z
    norms = np.sqrt(np.einsum("ij,ij->j", x, M @ x))
    return lam, x / norms


def dcb_couple(lower_basis, upper_basis, interface):
    return DcbAssembly(lower_basis, upper_basis, interface)


def dcb_assemble(lower_basis, upper_basis, interface, theta):
    """Dual assembly with ``T_theta`` carrying attachment columns ``-(1/theta_i) F_i B_i^T``."""
    return DcbAssembly(lower_basis, upper_basis, interface).at(theta)


def dcb_eigenvalues(system, n):
    """Lowest ``n`` physical eigenpairs of a DCB reduced system.

    Eigenpairs below the rigid threshold or dominated by the multiplier
    coordinates are dropped; ``info`` records solved and filtered counts.
    """
    return system.assembly.eigenpairs(system, n)


def dcb_expand(system, reduced_shapes):
    """Physical displacements ``u_i = R_i alpha_i + Phi_i q_i - F_i B_i^T mu / theta_i``."""
    return system.assembly.expand(system, reduced_shapes)
