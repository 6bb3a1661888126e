"""Rigid-body mode detection shared by the reduction methods."""

import numpy as np

RIGID_TOL = 1e-6


def count_rigid_modes(eigenvalues, tol=RIGID_TOL):
    """Number of leading eigenvalues below ``tol`` times the first flexible one.

    The first flexible eigenvalue is taken as the smallest one exceeding
    ``1e-10`` of the largest, which separates round-off from physics.
    """
    lam = np.sort(np.asarray(eigenvalues))
    flexible = lam[lam > 1e-10 * lam[-1]]
    if flexible.size == 0:
        return lam.size
    return int(np.count_nonzero(lam < tol * flexible[0]))
