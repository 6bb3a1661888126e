"""Generalized eigenanalysis, MAC, mode matching and modal discrepancy.

The frequency term works on eigenvalues (lambda = omega^2) rather than on
frequencies in Hz. Because the error is relative, this only changes the
scale of the term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DomainError, FactorizationError, SolverError

DEFAULT_N_MODES = 10
RESIDUAL_TOL = 1e-8
MATCH_WARN_MAC = 0.5


@dataclass(frozen=True, eq=False)
class ModalData:
    """Eigenvalues (rad^2/s^2, ascending) and mass-normalized mode shapes."""

    eigenvalues: np.ndarray
    mode_shapes: np.ndarray
    dof_labels: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))
        object.__setattr__(self, "mode_shapes", np.asarray(self.mode_shapes, dtype=float))
        if self.mode_shapes.shape[1] != self.eigenvalues.size:
            raise DomainError("one mode shape column is required per eigenvalue")

    @property
    def n_modes(self):
        return self.eigenvalues.size

    @property
    def frequencies_hz(self):
        return np.sqrt(np.clip(self.eigenvalues, 0.0, None)) / (2.0 * np.pi)

    def take(self, order):
        """Modes reordered/selected by the index sequence ``order``."""
        order = np.asarray(order, dtype=int)
        return ModalData(self.eigenvalues[order], self.mode_shapes[:, order], self.dof_labels, dict(self.info))

    def head(self, n):
        return self.take(np.arange(n))


def fix_signs(vectors):
    """Flip columns so the largest-magnitude entry of each is positive."""
    vectors = np.array(vectors, dtype=float)
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _inverse_pencil_eig(K, M, n_modes):
    """Lowest pairs via the inverted pencil ``M phi = (1 / lambda) K phi``.

    Needs ``K`` positive definite. The low modes become the dominant ones,
    so they carry relative accuracy near machine precision instead of
    ``eps * lambda_max / lambda``.
    """
    n = K.shape[0]
    mu, phi = la.eigh(M, K, subset_by_index=[n - n_modes, n - 1])
    if mu[0] <= 0:
        raise la.LinAlgError("inverted pencil has non-positive eigenvalues")
    mu, phi = mu[::-1], phi[:, ::-1]
    return 1.0 / mu, phi / np.sqrt(mu)


def generalized_eig(K, M, n_modes, dof_labels=(), check_residual=True):
    """Lowest ``n_modes`` eigenpairs of ``K phi = lambda M phi``.

    Parameters
    ----------
    K, M : (n, n) array_like
        Symmetric matrices, ``M`` positive definite. When ``K`` is
        positive definite too, the inverted pencil is solved for accuracy.
    n_modes : int
        Number of pairs, ``1 <= n_modes <= n``.

    Returns
    -------
    ModalData
        Mass-normalized shapes with the largest entry of each positive.

    Raises
    ------
    FactorizationError
        ``M`` is not positive definite.
    SolverError
        LAPACK failed, or a pair has relative residual above 1e-8.
    """
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    n = K.shape[0]
    if not 1 <= n_modes <= n:
        raise DomainError(f"n_modes must lie in [1, {n}], got {n_modes}")
    try:
        la.cholesky(M, lower=True)
    except la.LinAlgError as exc:
        raise FactorizationError(f"mass matrix is not positive definite: {exc}") from None
    try:
        lam, phi = _inverse_pencil_eig(K, M, n_modes)
    except la.LinAlgError:
        try:
            lam, phi = la.eigh(K, M, subset_by_index=[0, n_modes - 1])
        except la.LinAlgError as exc:
            raise SolverError(f"generalized eigensolver failed: {exc}") from None

    phi = fix_signs(phi)
    if check_residual:
        residual = la.norm(K @ phi - (M @ phi) * lam, axis=0)
        scale = la.norm(K, 2) * la.norm(phi, axis=0)
        worst = np.max(residual / np.where(scale > 0, scale, 1.0))
        if worst > RESIDUAL_TOL:
            raise SolverError(f"eigenpair residual {worst:.3e} exceeds {RESIDUAL_TOL:g}")
    return ModalData(lam, phi, tuple(dof_labels))


def mac_matrix(phi_t, phi_r):
    """Modal assurance criterion between the columns of two shape sets.

    ``MAC[i, j]`` compares column ``i`` of ``phi_t`` with column ``j`` of
    ``phi_r``; the result lies in [0, 1] and ignores scaling and sign.
    """
    phi_t = np.atleast_2d(np.asarray(phi_t, dtype=float).T).T
    phi_r = np.atleast_2d(np.asarray(phi_r, dtype=float).T).T
    if phi_t.shape[0] != phi_r.shape[0]:
        raise DomainError(f"shape sets have {phi_t.shape[0]} and {phi_r.shape[0]} rows")
    # one Gram product so every dot product shares the same summation order;
    # this keeps MAC(phi, c*phi) exactly 1 for power-of-two c
    k = phi_t.shape[1]
    gram = np.hstack([phi_t, phi_r]).T @ np.hstack([phi_t, phi_r])
    norms = np.diag(gram)
    nt, nr = norms[:k], norms[k:]
    if np.any(nt == 0) or np.any(nr == 0):
        raise DomainError("MAC is undefined for a zero-norm mode shape")
    cross = gram[:k, k:]
    return np.clip(cross * cross / np.outer(nt, nr), 0.0, 1.0)


@dataclass(frozen=True)
class ModeMatch:
    """Result of `match_modes`: ``permutation[i]`` is the candidate index paired with reference mode ``i``."""

    permutation: tuple
    mac: tuple
    warnings: tuple = ()


def match_modes(reference, candidate):
    """Greedy MAC pairing of reference modes with candidate modes.

    Reference modes are processed in order; each takes the unused
    candidate with the highest MAC. A best MAC below 0.5 is recorded as a
    warning rather than raised.
    """
    if candidate.n_modes < reference.n_modes:
        raise DomainError("candidate must hold at least as many modes as the reference")
    mac = mac_matrix(reference.mode_shapes, candidate.mode_shapes)
    used = np.zeros(candidate.n_modes, dtype=bool)
    perm, values, notes = [], [], []
    for i in range(reference.n_modes):
        row = np.where(used, -1.0, mac[i])
        j = int(np.argmax(row))
        used[j] = True
        perm.append(j)
        values.append(float(mac[i, j]))
        if mac[i, j] < MATCH_WARN_MAC:
            notes.append(f"reference mode {i + 1}: best MAC {mac[i, j]:.3f} < {MATCH_WARN_MAC}")
    return ModeMatch(tuple(perm), tuple(values), tuple(notes))


def freq_error(model, data, n=DEFAULT_N_MODES):
    """Mean squared relative eigenvalue error over the first ``n`` modes."""
    lam_m = model.eigenvalues[:n]
    lam_d = data.eigenvalues[:n]
    if lam_m.size < n or lam_d.size < n:
        raise DomainError(f"both mode sets must hold at least {n} modes")
    if np.any(lam_d <= 0):
        raise DomainError("data eigenvalues must be > 0")
    return float(np.mean(((lam_m - lam_d) / lam_d) ** 2))


def mac_deviation(mac, target=None):
    """Mean squared entrywise deviation of a square MAC matrix from ``target``.

    ``target`` defaults to the identity.
    """
    mac = np.asarray(mac, dtype=float)
    if target is None:
        target = np.eye(mac.shape[0])
    return float(np.sum((mac - target) ** 2) / mac.size)


def mac_error(model, data, n=DEFAULT_N_MODES):
    """MAC discrepancy over the first ``n`` matched modes.

    Cross-MAC between model and data shapes is compared with the data
    auto-MAC, so the error vanishes exactly when both sets coincide up to
    scale and sign. For mutually orthogonal data shapes the auto-MAC is
    the identity.
    """
    phi_m = model.mode_shapes[:, :n]
    phi_d = data.mode_shapes[:, :n]
    if phi_m.shape[1] < n or phi_d.shape[1] < n:
        raise DomainError(f"both mode sets must hold at least {n} modes")
    return mac_deviation(mac_matrix(phi_m, phi_d), mac_matrix(phi_d, phi_d))


def objective_j(model, data, n=DEFAULT_N_MODES):
    """Sum of `freq_error` and `mac_error`."""
    return freq_error(model, data, n) + mac_error(model, data, n)


def matched_objective(model, data, n=DEFAULT_N_MODES):
    """`objective_j` after reordering ``model`` by MAC matching to ``data``.

    Returns ``(J, match)``.
    """
    ref = data.head(n)
    match = match_modes(ref, model)
    for note in match.warnings:
        warnings.warn(note, stacklevel=2)
    return objective_j(model.take(match.permutation), ref, n), match
