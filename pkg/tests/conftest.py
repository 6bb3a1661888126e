import numpy as np
import pytest

from substruct.cms_cb import cb_couple, cb_reduce
from substruct.cms_dcb import dcb_couple, dcb_reduce
from substruct.modal import generalized_eig
from substruct.model import build_tower_model, full_assemble, global_layout


@pytest.fixture(scope="session")
def tower():
    return build_tower_model()


@pytest.fixture(scope="session")
def full_matrices(tower):
    return full_assemble(*tower)


@pytest.fixture(scope="session")
def full_modes(tower, full_matrices):
    M, K = full_matrices
    return generalized_eig(K, M, 14, global_layout(*tower).dof_labels)


@pytest.fixture(scope="session")
def cb_assembly(tower):
    lower, upper, interface = tower
    return cb_couple(cb_reduce(lower, 10), cb_reduce(upper, 10), interface)


@pytest.fixture(scope="session")
def dcb_assembly(tower):
    lower, upper, interface = tower
    return dcb_couple(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface)


@pytest.fixture(scope="session")
def lossless(tower):
    """CB and DCB assemblies that keep every internal / flexible mode."""
    lower, upper, interface = tower
    cb = cb_couple(cb_reduce(lower, len(lower.internal_dofs)),
                   cb_reduce(upper, len(upper.internal_dofs)), interface)
    dcb = dcb_couple(dcb_reduce(lower, lower.n_dofs), dcb_reduce(upper, upper.n_dofs - 6), interface)
    return cb, dcb


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.abs(b)
