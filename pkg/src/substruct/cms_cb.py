"""Craig-Bampton reduction and primal assembly.

Fixed-interface modes and constraint modes do not change when a
substructure's stiffness is scaled by a factor theta, so the reduced
blocks are computed once at theta = 1 and an updated system only costs a
scaling of the cached reduced stiffness followed by the Boolean
congruence with the primal assembly matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import AssemblyError, DomainError, FactorizationError
from .modal import generalized_eig
from .spectral import count_rigid_modes
from .model import as_damage_state, global_layout, partition_dofs
from .reduction import ReducedSystem


@dataclass(frozen=True, eq=False)
class CbBasis:
    """Craig-Bampton basis of one substructure.

    ``reduction`` acts on partitioned coordinates (internal DOFs first, in
    ``partition.perm`` order) and maps ``[q; x_b]`` to ``[x_i; x_b]``.
    """

    fixed_interface_modes: np.ndarray
    fixed_interface_eigenvalues: np.ndarray
    constraint_modes: np.ndarray
    reduction: np.ndarray
    kept_modes: int
    stiffness_hat: np.ndarray
    mass_hat: np.ndarray
    partition: object
    substructure: object

    @property
    def n_boundary(self):
        return self.constraint_modes.shape[1]

    @property
    def n_reduced(self):
        return self.kept_modes + self.n_boundary

    def to_physical(self, reduced):
        """Map ``[q; x_b]`` vectors to the substructure's original DOF order."""
        partitioned = self.reduction @ reduced
        out = np.empty_like(partitioned)
        out[self.partition.perm] = partitioned
        return out


def cb_reduce(sub, n_modes):
    """Craig-Bampton reduction of ``sub`` keeping ``n_modes`` fixed-interface modes.

    Raises
    ------
    DomainError
        ``n_modes`` outside ``[1, n_internal]``.
    FactorizationError
        ``K_ii`` is not positive definite.
    """
    blocks = partition_dofs(sub)
    ni = blocks.n_internal
    if not 1 <= n_modes <= ni:
        raise DomainError(f"n_modes must lie in [1, {ni}], got {n_modes}")
    try:
        factor = la.cho_factor(blocks.K_ii, lower=True)
    except la.LinAlgError:
        raise FactorizationError("K_ii is singular; the internal mesh is not held by the boundary") from None
    psi = -la.cho_solve(factor, blocks.K_ib)

    modes = generalized_eig(blocks.K_ii, blocks.M_ii, n_modes)
    nb = blocks.K_bb.shape[0]
    R = np.zeros((ni + nb, n_modes + nb))
    R[:ni, :n_modes] = modes.mode_shapes
    R[:ni, n_modes:] = psi
    R[ni:, n_modes:] = np.eye(nb)

    M_p, K_p = _partitioned(sub, blocks.perm)
    K_hat = R.T @ K_p @ R
    M_hat = R.T @ M_p @ R
    if not sub.constrained:
        K_hat = _remove_boundary_rigid_energy(K_hat, sub, n_modes)
    return CbBasis(
        fixed_interface_modes=modes.mode_shapes,
        fixed_interface_eigenvalues=modes.eigenvalues,
        constraint_modes=psi,
        reduction=R,
        kept_modes=n_modes,
        stiffness_hat=0.5 * (K_hat + K_hat.T),
        mass_hat=0.5 * (M_hat + M_hat.T),
        partition=blocks,
        substructure=sub,
    )


def _remove_boundary_rigid_energy(K_hat, sub, n_modes):
    """Project rigid-body motion of the boundary out of the reduced stiffness.

    Rigid motions of a free substructure are reproduced exactly by its
    constraint modes and carry no strain energy, so ``K_hat`` annihilates
    them. In floating point the condensed boundary stiffness of a
    statically determinate interface is round-off of order eps*|K|, which
    this projection sets back to zero.
    """
    lam, phi = la.eigh(sub.stiffness, sub.mass)
    n_rbm = count_rigid_modes(lam)
    if n_rbm == 0:
        return K_hat
    rb = phi[sub.boundary_dofs, :n_rbm]
    nb = rb.shape[0]
    P = np.eye(nb) - rb @ la.pinv(rb)
    Q = la.block_diag(np.eye(n_modes), P)
    K = Q.T @ K_hat @ Q
    return 0.5 * (K + K.T)


def _partitioned(sub, perm):
    return sub.mass[np.ix_(perm, perm)], sub.stiffness[np.ix_(perm, perm)]


class CbAssembly:
    """Primal coupling of two Craig-Bampton bases.

    Global reduced coordinates are ordered ``[q1, q2, x_b]``; the shared
    boundary coordinate ``k`` belongs to interface pair ``k``.
    """

    method = "CB"

    def __init__(self, lower, upper, interface):
        if lower.n_boundary != upper.n_boundary or lower.n_boundary != len(interface):
            raise AssemblyError(
                f"boundary sizes differ: lower {lower.n_boundary}, upper {upper.n_boundary}, "
                f"interface {len(interface)}"
            )
        interface.check(lower.substructure, upper.substructure)
        self.lower = lower
        self.upper = upper
        self.interface = interface
        self.layout = global_layout(lower.substructure, upper.substructure, interface)

        n1, n2, nb = lower.kept_modes, upper.kept_modes, len(interface)
        self.n_reduced = n1 + n2 + nb
        pos1 = {int(d): k for k, d in enumerate(lower.substructure.boundary_dofs)}
        pos2 = {int(d): k for k, d in enumerate(upper.substructure.boundary_dofs)}
        L = np.zeros((lower.n_reduced + upper.n_reduced, self.n_reduced))
        L[:n1, :n1] = np.eye(n1)
        r2 = lower.n_reduced
        L[r2:r2 + n2, n1:n1 + n2] = np.eye(n2)
        for k, (i1, i2) in enumerate(interface.pairs):
            L[n1 + pos1[i1], n1 + n2 + k] = 1.0
            L[r2 + n2 + pos2[i2], n1 + n2 + k] = 1.0
        self.L = L
        self._L1 = L[:lower.n_reduced]
        self._L2 = L[lower.n_reduced:]
        self._K1 = self._L1.T @ lower.stiffness_hat @ self._L1
        self._K2 = self._L2.T @ upper.stiffness_hat @ self._L2
        self._M = self._L1.T @ lower.mass_hat @ self._L1 + self._L2.T @ upper.mass_hat @ self._L2

    def at(self, theta):
        """Reduced system with substructure stiffnesses scaled by ``theta``."""
        theta = as_damage_state(theta)
        K = theta[0] * self._K1 + theta[1] * self._K2
        return ReducedSystem("CB", 0.5 * (K + K.T), self._M, theta.theta, self)

    def eigenpairs(self, system, n):
        return generalized_eig(system.stiffness, system.mass, n)

    def expand(self, system, reduced_shapes):
        coords = self.L @ np.asarray(reduced_shapes)
        r = self.lower.n_reduced
        return self.lower.to_physical(coords[:r]), self.upper.to_physical(coords[r:])


def cb_couple(lower_basis, upper_basis, interface):
    return CbAssembly(lower_basis, upper_basis, interface)


def cb_assemble(lower_basis, upper_basis, interface, theta):
    """Primal assembly ``K_CB = L^T blockdiag(theta_i K_hat_i) L`` and ``M_CB``."""
    return CbAssembly(lower_basis, upper_basis, interface).at(theta)


def cb_eigenvalues(system, n):
    """Lowest ``n`` eigenpairs of a CB reduced system, in reduced coordinates."""
    return generalized_eig(system.stiffness, system.mass, n)


def cb_expand(system, reduced_shapes):
    """Physical shapes ``(lower, upper)`` of reduced CB coordinate vectors."""
    return system.assembly.expand(system, reduced_shapes)
