"""Shared container for assembled reduced systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Reduced mass/stiffness pair assembled at one damage state.

    ``assembly`` is the `CbAssembly` or `DcbAssembly` that produced the
    matrices; it knows how to solve and expand them.
    """

    method: str
    stiffness: np.ndarray
    mass: np.ndarray
    theta: tuple
    assembly: object

    @property
    def n_dofs(self):
        return self.stiffness.shape[0]

    def eigenpairs(self, n):
        """Lowest ``n`` physical eigenpairs in reduced coordinates."""
        return self.assembly.eigenpairs(self, n)

    def expand(self, reduced_shapes):
        """Physical shapes ``(lower, upper)`` from reduced coordinates."""
        return self.assembly.expand(self, reduced_shapes)

    def physical_modes(self, n):
        """Lowest ``n`` modes expanded onto the assembled-structure DOFs."""
        from .modal import ModalData, fix_signs

        modes = self.eigenpairs(n)
        lower, upper = self.expand(modes.mode_shapes)
        layout = self.assembly.layout
        shapes = fix_signs(layout.combine(lower, upper))
        return ModalData(modes.eigenvalues, shapes, layout.dof_labels, dict(modes.info))
