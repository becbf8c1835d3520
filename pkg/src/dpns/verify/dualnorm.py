"""Discrete H^{-1}-type dual norms via Riesz representers."""

import numpy as np
import scipy.sparse.linalg as spla

from ..assembly import load_vector, stiffness_matrix, strain_matrix
from ..femspace import DofMap, ElementSpec

SPACES = ("velocity", "scalar")


def riesz_space(mesh, space):
    """Test space of the dual norm: X_s,h (zero on Gamma_s) or X_d,h (zero on Gamma_d)."""
    if space == "velocity":
        return DofMap(mesh, ElementSpec(2, 2), "Fluid", ["GammaS"])
    if space == "scalar":
        return DofMap(mesh, ElementSpec(2, 1), "Dual", ["GammaD"])
    raise ValueError(f"unknown dual-norm space {space!r}; expected one of {SPACES}")


def gram_matrix(dm):
    """(D z, D v) for vector spaces, (grad z, grad v) for scalar ones."""
    return strain_matrix(dm) if dm.arity == 2 else stiffness_matrix(dm)


def dual_norm(f, space, mesh, dofmap=None, return_representer=False):
    """sup over discrete v of (f, v) / |v|, with |v| = ||D v|| or ||grad v||.

    Computed exactly as sqrt(F^T G^{-1} F) on the unconstrained dofs, where G
    is the Gram matrix of the seminorm and F the load vector.

    Parameters
    ----------
    f : callable or ndarray
        Pointwise field, or a precomputed load vector on ``dofmap``.
    space : {"velocity", "scalar"}
    """
    dm = dofmap or riesz_space(mesh, space)
    F = np.asarray(f, dtype=float) if isinstance(f, np.ndarray) else load_vector(dm, f)
    free = dm.free
    Ff = F[free]
    z = np.zeros(dm.ndofs)
    if np.any(Ff):
        G = gram_matrix(dm).tocsc()[free][:, free]
        z[free] = spla.splu(G.tocsc()).solve(Ff)
    value = float(np.sqrt(max(Ff @ z[free], 0.0)))
    if return_representer:
        return value, z
    return value
