"""Discrete inf-sup constant of the velocity-pressure pair."""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..assembly import divergence_matrix, mass_matrix, vector_stiffness_matrix
from ..femspace import DofMap, ElementSpec


class EigenNonConvergenceError(RuntimeError):
    pass


@dataclass
class InfSupReport:
    level: int
    h: float
    beta: float  # smallest nonzero generalized singular value
    eig_residual: float
    pressure_degree: int
    n_velocity: int
    n_pressure: int
    kernel_dim: int = 0
    checks: str = "discrete inf-sup condition"

    def to_dict(self):
        return asdict(self)


def infsup_from_blocks(B, Mu, Mp, tol=1e-8, null_tol=1e-10):
    """Smallest nonzero beta with beta^2 q solving B Mu^{-1} B^T q = beta^2 Mp q.

    Eigenvalues below ``null_tol`` times max_i S_ii / Mp_ii are treated as the
    kernel of B^T (spurious pressure modes) and skipped.

    Parameters
    ----------
    B : sparse or dense (n_p, n_u)
    Mu : sparse SPD (n_u, n_u)
    Mp : sparse or dense SPD (n_p, n_p)

    Returns
    -------
    (beta, relative eigen-residual, eigenvector, kernel dimension)
    """
    Bd = B.toarray() if hasattr(B, "toarray") else np.asarray(B, dtype=float)
    Mu = sp.csc_matrix(Mu)
    S = Bd @ spla.splu(Mu).solve(Bd.T.copy())
    S = 0.5 * (S + S.T)
    P = Mp.toarray() if hasattr(Mp, "toarray") else np.asarray(Mp, dtype=float)
    n = S.shape[0]
    # Rayleigh quotients of unit vectors bound lambda_max from below
    scale = float(np.max(np.diag(S) / np.diag(P)))
    thr = null_tol * max(scale, np.finfo(float).tiny)
    k = min(n, 16)
    while True:
        lam, vec = sla.eigh(S, P, subset_by_index=[0, k - 1])
        nz = np.flatnonzero(lam > thr)
        if len(nz) or k == n:
            break
        k = min(n, 2 * k)
    if not len(nz):
        raise EigenNonConvergenceError("divergence operator is identically zero")
    i = int(nz[0])
    lam0, q = float(lam[i]), vec[:, i]
    scale = max(np.linalg.norm(S, 1), abs(lam0) * np.linalg.norm(P, 1)) * np.linalg.norm(q)
    res = np.linalg.norm(S @ q - lam0 * (P @ q)) / max(scale, np.finfo(float).tiny)
    if not np.isfinite(lam0) or res > tol:
        raise EigenNonConvergenceError(f"generalized eigen-solve residual {res:.3e} > {tol:.1e}")
    return float(np.sqrt(lam0)), float(res), q, i


def infsup_estimate(mesh, params, pressure_degree=1, level=0, tol=1e-8):
    """beta_h over X_s,h x Q_s,h with the full H^1 velocity norm and L^2 pressure norm.

    ``pressure_degree=2`` gives the equal-order pair used as a negative control.
    """
    dv = DofMap(mesh, ElementSpec(2, 2), "Fluid", ["GammaS"])
    dp = DofMap(mesh, ElementSpec(pressure_degree, 1), "Fluid")
    free = dv.free
    B = divergence_matrix(dv, dp, -params.rho).tocsc()[:, free]
    Mu = (vector_stiffness_matrix(dv) + mass_matrix(dv)).tocsc()[free][:, free]
    Mp = mass_matrix(dp)
    beta, res, _, kernel = infsup_from_blocks(B, Mu, Mp, tol)
    return InfSupReport(level, float(mesh.h), beta, res, pressure_degree, len(free), dp.ndofs,
                        kernel)
