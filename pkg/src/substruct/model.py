"""Desk-scale tower model split into two beam substructures.

The tower is a vertical column of 3D Euler-Bernoulli beam elements with a
hollow circular section tapering linearly with height. It is cut at the
flange into a grounded lower substructure and a free-free upper one; the
two share the flange node, whose six DOFs form the interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la

from .errors import AssemblyError, ConfigurationError, DomainError
from .matrix_market import load_matrix, save_matrix  # noqa: F401  (re-export)

DOF_KINDS = ("ux", "uy", "uz", "rx", "ry", "rz")
N_NODE_DOF = len(DOF_KINDS)

# local axes of an element pointing along +Z: x_loc = Z, y_loc = X, z_loc = Y
_VERTICAL_ROTATION = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class TowerConfig:
    """Geometry and material of the tower.

    Lengths in m, modulus in Pa, density in kg/m^3. ``section_ovality``
    splits the bending inertia of the two sway directions into
    ``I*(1 + ovality)`` (sway along X) and ``I*(1 - ovality)`` (sway along Y)
    so that bending pairs are not exactly degenerate. ``rotary_inertia``
    adds the section's rotatory inertia to the element mass; for a tube
    several metres wide on 1 m elements this keeps the rotational DOFs from
    driving the spectrum to ~1e11 rad^2/s^2.
    """

    height_total: float = 40.0
    diameter_base: float = 8.0
    diameter_top: float = 5.0
    wall_thickness: float = 0.1
    youngs_modulus: float = 210e9
    poisson_ratio: float = 0.3
    density: float = 7850.0
    elements_per_substructure: int = 20
    interface_fraction: float = 0.5
    flange_outer_diameter: float = 6.6
    flange_thickness: float = 0.5
    section_ovality: float = 0.01
    rotary_inertia: bool = True

    def validate(self):
        checks = [
            (self.height_total > 0, "height_total must be > 0"),
            (self.diameter_base > 0, "diameter_base must be > 0"),
            (self.diameter_top > 0, "diameter_top must be > 0"),
            (self.diameter_top <= self.diameter_base, "diameter_top must be <= diameter_base"),
            (self.wall_thickness > 0, "wall_thickness must be > 0"),
            (2 * self.wall_thickness < self.diameter_top, "wall_thickness must be < diameter_top / 2"),
            (self.youngs_modulus > 0, "youngs_modulus must be > 0"),
            (0 < self.poisson_ratio < 0.5, "poisson_ratio must lie in (0, 0.5)"),
            (self.density > 0, "density must be > 0"),
            (int(self.elements_per_substructure) == self.elements_per_substructure
             and self.elements_per_substructure >= 4, "elements_per_substructure must be an integer >= 4"),
            (0 < self.interface_fraction < 1, "interface_fraction must lie in (0, 1)"),
            (self.flange_outer_diameter > 0, "flange_outer_diameter must be > 0"),
            (self.flange_thickness >= 0, "flange_thickness must be >= 0"),
            (0 <= self.section_ovality < 1, "section_ovality must lie in [0, 1)"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        return self

    @property
    def shear_modulus(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def flange_height(self):
        return self.interface_fraction * self.height_total

    def diameter_at(self, z):
        """Outer diameter at height ``z`` from the linear taper."""
        return self.diameter_base + (self.diameter_top - self.diameter_base) * z / self.height_total


@dataclass(frozen=True, eq=False)
class SubstructureModel:
    """Mass and stiffness of one component with its DOF bookkeeping."""

    mass: np.ndarray
    stiffness: np.ndarray
    dof_labels: tuple
    boundary_dofs: np.ndarray
    constrained: bool
    name: str = ""

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        stiffness = np.asarray(self.stiffness, dtype=float)
        boundary = np.asarray(self.boundary_dofs, dtype=int)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "stiffness", stiffness)
        object.__setattr__(self, "boundary_dofs", boundary)
        object.__setattr__(self, "dof_labels", tuple(tuple(lbl) for lbl in self.dof_labels))
        n = mass.shape[0]
        if mass.shape != (n, n) or stiffness.shape != (n, n):
            raise DomainError("mass and stiffness must be square matrices of equal size")
        if len(self.dof_labels) != n:
            raise DomainError("dof_labels must have one entry per matrix row")
        for label, mat in (("mass", mass), ("stiffness", stiffness)):
            if la.norm(mat - mat.T) > 1e-12 * max(la.norm(mat), 1e-300):
                raise DomainError(f"{label} matrix is not symmetric")
        if boundary.ndim != 1 or boundary.size == 0:
            raise DomainError("boundary_dofs must be a non-empty index vector")
        if np.any(np.diff(boundary) <= 0) or boundary[0] < 0 or boundary[-1] >= n:
            raise DomainError("boundary_dofs must be strictly increasing and within range")

    @property
    def n_dofs(self):
        return self.mass.shape[0]

    @property
    def internal_dofs(self):
        return np.setdiff1d(np.arange(self.n_dofs), self.boundary_dofs)


@dataclass(frozen=True)
class InterfaceMap:
    """Pairs ``(i1, i2)`` of DOF indices that coincide at the joint."""

    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))

    def __len__(self):
        return len(self.pairs)

    @property
    def lower(self):
        return np.array([p[0] for p in self.pairs], dtype=int)

    @property
    def upper(self):
        return np.array([p[1] for p in self.pairs], dtype=int)

    def check(self, lower, upper):
        """Raise `AssemblyError` unless the map is consistent with both models."""
        if len(self.pairs) == 0:
            raise AssemblyError("interface map is empty")
        for side, model, idx in (("lower", lower, self.lower), ("upper", upper, self.upper)):
            if len(set(idx.tolist())) != idx.size:
                raise AssemblyError(f"{side} DOF repeated in interface map")
            if np.any(idx < 0) or np.any(idx >= model.n_dofs):
                raise AssemblyError(f"{side} interface DOF out of range")
            if set(idx.tolist()) != set(model.boundary_dofs.tolist()):
                raise AssemblyError(f"{side} interface DOFs do not match its boundary set")


@dataclass(frozen=True)
class DamageState:
    """Per-substructure stiffness multipliers."""

    theta: tuple
    n_substructures: int = 2

    def __post_init__(self):
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if len(theta) != self.n_substructures:
            raise DomainError(f"theta must have {self.n_substructures} entries, got {len(theta)}")
        if not all(math.isfinite(t) and t > 0 for t in theta):
            raise DomainError("every theta component must be finite and > 0")
        object.__setattr__(self, "theta", theta)

    def __iter__(self):
        return iter(self.theta)

    def __getitem__(self, i):
        return self.theta[i]

    def as_array(self):
        return np.array(self.theta)


def as_damage_state(theta):
    return theta if isinstance(theta, DamageState) else DamageState(tuple(np.atleast_1d(theta)))


# --------------------------------------------------------------------------
# beam elements


def hollow_circle_section(outer_diameter, wall_thickness):
    """Area, second moment of area and polar moment of a thin tube."""
    ro = outer_diameter / 2.0
    ri = ro - wall_thickness
    area = math.pi * (ro**2 - ri**2)
    inertia = math.pi / 4.0 * (ro**4 - ri**4)
    return area, inertia, 2.0 * inertia


def beam_element_matrices(length, E, G, rho, A, Iy, Iz, J, rotary_inertia=True):
    """Local 12x12 stiffness and consistent mass of a 3D Euler-Bernoulli beam.

    Local DOF order per node is (u, v, w, rx, ry, rz) with x along the axis.
    ``Iz`` governs bending in the x-y plane (v, rz), ``Iy`` bending in the
    x-z plane (w, ry). With ``rotary_inertia`` the consistent mass includes
    the rotatory inertia of the section (Rayleigh beam); the stiffness has
    no shear deformation either way.
    """
    L = length
    k = np.zeros((12, 12))
    m = np.zeros((12, 12))

    ea = E * A / L
    gj = G * J / L
    k[np.ix_([0, 6], [0, 6])] = ea * np.array([[1, -1], [-1, 1]])
    k[np.ix_([3, 9], [3, 9])] = gj * np.array([[1, -1], [-1, 1]])

    def bending(EI, sign):
        s = sign
        return EI / L**3 * np.array([
            [12, s * 6 * L, -12, s * 6 * L],
            [s * 6 * L, 4 * L**2, -s * 6 * L, 2 * L**2],
            [-12, -s * 6 * L, 12, -s * 6 * L],
            [s * 6 * L, 2 * L**2, -s * 6 * L, 4 * L**2],
        ])

    def bending_mass(mass, sign):
        s = sign
        return mass / 420.0 * np.array([
            [156, s * 22 * L, 54, -s * 13 * L],
            [s * 22 * L, 4 * L**2, s * 13 * L, -3 * L**2],
            [54, s * 13 * L, 156, -s * 22 * L],
            [-s * 13 * L, -3 * L**2, -s * 22 * L, 4 * L**2],
        ])

    def rotary_mass(rho_i, sign):
        s = sign
        return rho_i / (30.0 * L) * np.array([
            [36, s * 3 * L, -36, s * 3 * L],
            [s * 3 * L, 4 * L**2, -s * 3 * L, -L**2],
            [-36, -s * 3 * L, 36, -s * 3 * L],
            [s * 3 * L, -L**2, -s * 3 * L, 4 * L**2],
        ])

    xy = [1, 5, 7, 11]
    xz = [2, 4, 8, 10]
    k[np.ix_(xy, xy)] = bending(E * Iz, 1)
    k[np.ix_(xz, xz)] = bending(E * Iy, -1)

    total = rho * A * L
    m[np.ix_([0, 6], [0, 6])] = total / 6.0 * np.array([[2, 1], [1, 2]])
    m[np.ix_([3, 9], [3, 9])] = rho * J * L / 6.0 * np.array([[2, 1], [1, 2]])
    m[np.ix_(xy, xy)] = bending_mass(total, 1)
    m[np.ix_(xz, xz)] = bending_mass(total, -1)
    if rotary_inertia:
        m[np.ix_(xy, xy)] += rotary_mass(rho * Iz, 1)
        m[np.ix_(xz, xz)] += rotary_mass(rho * Iy, -1)
    return k, m


def vertical_beam_matrices(length, E, G, rho, A, I_sway_x, I_sway_y, J, rotary_inertia=True):
    """Global-frame matrices of an element running along +Z.

    ``I_sway_x`` is the bending inertia resisting sway along global X.
    """
    # sway along X is local v (x-y plane, Iz); sway along Y is local w (Iy)
    k, m = beam_element_matrices(length, E, G, rho, A, Iy=I_sway_y, Iz=I_sway_x, J=J,
                                 rotary_inertia=rotary_inertia)
    T = la.block_diag(*([_VERTICAL_ROTATION] * 4))
    return T.T @ k @ T, T.T @ m @ T


def flange_lumped_mass(config):
    """6x6 lumped mass of the whole flange annulus (translations, rotations)."""
    ro = config.flange_outer_diameter / 2.0
    ri = config.diameter_at(config.flange_height) / 2.0 - config.wall_thickness
    h = config.flange_thickness
    mass = config.density * math.pi * (ro**2 - ri**2) * h
    i_tilt = mass * (3.0 * (ro**2 + ri**2) + h**2) / 12.0
    i_axial = mass * (ro**2 + ri**2) / 2.0
    return np.diag([mass, mass, mass, i_tilt, i_tilt, i_axial])


def _element_matrices(config, z_bottom, z_top):
    z_mid = 0.5 * (z_bottom + z_top)
    area, inertia, polar = hollow_circle_section(config.diameter_at(z_mid), config.wall_thickness)
    eps = config.section_ovality
    return vertical_beam_matrices(
        z_top - z_bottom, config.youngs_modulus, config.shear_modulus, config.density,
        area, inertia * (1.0 + eps), inertia * (1.0 - eps), polar,
        rotary_inertia=config.rotary_inertia,
    )


def assemble_column(config, heights, node_ids, fixed_nodes=(), lumped=None):
    """Assemble a vertical chain of beam elements between ``heights``.

    Returns ``(M, K, labels)`` after deleting the DOFs of ``fixed_nodes``.
    ``lumped`` maps node id -> 6x6 lumped mass added at that node.
    """
    n_nodes = len(heights)
    n = n_nodes * N_NODE_DOF
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for e in range(n_nodes - 1):
        ke, me = _element_matrices(config, heights[e], heights[e + 1])
        idx = np.arange(e * N_NODE_DOF, (e + 2) * N_NODE_DOF)
        K[np.ix_(idx, idx)] += ke
        M[np.ix_(idx, idx)] += me
    for node, block in (lumped or {}).items():
        pos = node_ids.index(node)
        idx = np.arange(pos * N_NODE_DOF, (pos + 1) * N_NODE_DOF)
        M[np.ix_(idx, idx)] += block
    labels = [(node, kind) for node in node_ids for kind in DOF_KINDS]
    keep = [i for i, (node, _) in enumerate(labels) if node not in fixed_nodes]
    K = K[np.ix_(keep, keep)]
    M = M[np.ix_(keep, keep)]
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    return M, K, [labels[i] for i in keep]


def build_tower_model(config=None):
    """Build the grounded lower and free-free upper tower substructures.

    Parameters
    ----------
    config : TowerConfig, optional
        Defaults to the 40 m steel tower with 20 elements per substructure.

    Returns
    -------
    lower, upper : SubstructureModel
    interface : InterfaceMap
        Six pairs linking the flange-node DOFs of both substructures.
    """
    config = (config or TowerConfig()).validate()
    n_el = int(config.elements_per_substructure)
    z_flange = config.flange_height
    lower_z = np.linspace(0.0, z_flange, n_el + 1)
    upper_z = np.linspace(z_flange, config.height_total, n_el + 1)
    lower_nodes = list(range(0, n_el + 1))
    upper_nodes = list(range(n_el, 2 * n_el + 1))
    half_flange = 0.5 * flange_lumped_mass(config)

    M1, K1, labels1 = assemble_column(config, lower_z, lower_nodes, fixed_nodes={0},
                                      lumped={n_el: half_flange})
    M2, K2, labels2 = assemble_column(config, upper_z, upper_nodes, lumped={n_el: half_flange})

    b1 = np.array([i for i, (node, _) in enumerate(labels1) if node == n_el])
    b2 = np.array([i for i, (node, _) in enumerate(labels2) if node == n_el])
    lower = SubstructureModel(M1, K1, labels1, b1, constrained=True, name="lower")
    upper = SubstructureModel(M2, K2, labels2, b2, constrained=False, name="upper")
    interface = InterfaceMap(tuple(zip(b1.tolist(), b2.tolist())))
    return lower, upper, interface


def apply_damage(model, theta_i):
    """Return a copy of ``model`` with its stiffness scaled by ``theta_i``."""
    if not (math.isfinite(theta_i) and theta_i > 0):
        raise DomainError(f"damage factor must be > 0, got {theta_i}")
    return replace(model, stiffness=theta_i * model.stiffness)


@dataclass(frozen=True, eq=False)
class PartitionedBlocks:
    """Internal/boundary blocks of a substructure and the permutation used.

    ``perm`` lists the original indices in partitioned order, internal DOFs
    first.
    """

    M_ii: np.ndarray
    M_ib: np.ndarray
    M_bb: np.ndarray
    K_ii: np.ndarray
    K_ib: np.ndarray
    K_bb: np.ndarray
    perm: np.ndarray
    n_internal: int

    def restore(self):
        """Reassemble the blocks and undo the permutation, giving ``(M, K)``."""
        inv = np.argsort(self.perm)
        M = np.block([[self.M_ii, self.M_ib], [self.M_ib.T, self.M_bb]])
        K = np.block([[self.K_ii, self.K_ib], [self.K_ib.T, self.K_bb]])
        return M[np.ix_(inv, inv)], K[np.ix_(inv, inv)]


def partition_dofs(model):
    internal = model.internal_dofs
    boundary = model.boundary_dofs
    perm = np.concatenate([internal, boundary])
    M = model.mass[np.ix_(perm, perm)]
    K = model.stiffness[np.ix_(perm, perm)]
    ni = internal.size
    return PartitionedBlocks(
        M_ii=M[:ni, :ni], M_ib=M[:ni, ni:], M_bb=M[ni:, ni:],
        K_ii=K[:ni, :ni], K_ib=K[:ni, ni:], K_bb=K[ni:, ni:],
        perm=perm, n_internal=ni,
    )


@dataclass(frozen=True, eq=False)
class GlobalLayout:
    """Map from substructure DOFs to the DOFs of the assembled structure.

    Lower DOFs keep their order; upper DOFs not shared with the lower
    substructure are appended after them.
    """

    lower_index: np.ndarray
    upper_index: np.ndarray
    n_dofs: int
    dof_labels: tuple = field(default=())

    def combine(self, lower_values, upper_values):
        """Scatter per-substructure vectors (or column blocks) to global DOFs.

        Shared DOFs receive the mean of both sides.
        """
        lower_values = np.asarray(lower_values)
        upper_values = np.asarray(upper_values)
        shape = (self.n_dofs,) + lower_values.shape[1:]
        out = np.zeros(shape, dtype=np.result_type(lower_values, upper_values))
        count = np.zeros(self.n_dofs)
        np.add.at(out, self.lower_index, lower_values)
        np.add.at(out, self.upper_index, upper_values)
        np.add.at(count, self.lower_index, 1.0)
        np.add.at(count, self.upper_index, 1.0)
        return out / count.reshape((-1,) + (1,) * (out.ndim - 1))


def global_layout(lower, upper, interface):
    interface.check(lower, upper)
    lower_index = np.arange(lower.n_dofs)
    upper_index = np.empty(upper.n_dofs, dtype=int)
    shared = dict((b, a) for a, b in interface.pairs)
    nxt = lower.n_dofs
    for j in range(upper.n_dofs):
        if j in shared:
            upper_index[j] = shared[j]
        else:
            upper_index[j] = nxt
            nxt += 1
    labels = [None] * nxt
    for i, lbl in zip(lower_index, lower.dof_labels):
        labels[i] = lbl
    for i, lbl in zip(upper_index, upper.dof_labels):
        if labels[i] is None:
            labels[i] = lbl
    return GlobalLayout(lower_index, upper_index, nxt, tuple(labels))


def full_assemble(lower, upper, interface):
    """Primal assembly of the unreduced substructures, returning ``(M, K)``."""
    layout = global_layout(lower, upper, interface)
    n = layout.n_dofs
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for model, idx in ((lower, layout.lower_index), (upper, layout.upper_index)):
        M[np.ix_(idx, idx)] += model.mass
        K[np.ix_(idx, idx)] += model.stiffness
    return M, K


def damaged_full_model(lower, upper, interface, theta):
    """Full assembled ``(M, K)`` with each substructure's stiffness scaled."""
    theta = as_damage_state(theta)
    return full_assemble(apply_damage(lower, theta[0]), apply_damage(upper, theta[1]), interface)
