"""Residuals of the four interface conditions at a discrete solution.

The conditions are natural in the variational problem, so they hold only up
to discretisation error. Flux conditions are measured weakly: the residual is
tested against the P2 trace basis on Gamma and measured in the dual of that
trace space with the interface mass matrix. Stress conditions use
elementwise one-sided traces in L^2(Gamma).
"""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from ..femspace import strain

CONDITIONS = ("no_exchange", "mass", "normal_force", "bjs")


@dataclass
class InterfaceResiduals:
    no_exchange: float
    mass: float
    normal_force: float
    bjs: float
    checks: str = "interface conditions (no exchange, mass, normal force, slip)"

    def to_dict(self):
        return asdict(self)

    def values(self):
        return {k: getattr(self, k) for k in CONDITIONS}


def _weak_norm(values, tr, n_scalar, dofs):
    """sqrt(r^T M^{-1} r) with r_i = <values, psi_i>_Gamma over the trace dofs ``dofs``."""
    local = -np.ones(n_scalar, dtype=np.int64)
    local[dofs] = np.arange(len(dofs))
    cd = local[tr.cell_dofs]
    keep = cd >= 0  # basis functions of the opposite vertex vanish on the edge
    m = len(dofs)
    r = np.zeros(m)
    loc = np.einsum("eq,eiq,eq->ei", tr.wlen, tr.values, values)
    np.add.at(r, cd[keep], loc[keep])
    M = np.zeros((m, m))
    mloc = np.einsum("eq,eiq,ejq->eij", tr.wlen, tr.values, tr.values)
    pair = keep[:, :, None] & keep[:, None, :]
    rows = np.broadcast_to(cd[:, :, None], mloc.shape)
    cols = np.broadcast_to(cd[:, None, :], mloc.shape)
    np.add.at(M, (rows[pair], cols[pair]), mloc[pair])
    if not np.any(r):
        return 0.0
    return float(np.sqrt(max(r @ sla.solve(M, r, assume_a="pos"), 0.0)))


def _l2(values, tr):
    return float(np.sqrt((tr.wlen * values ** 2).sum()))


def interface_residuals(state, params):
    """Residual norms of the four interface conditions for a computed state."""
    pr = params
    mesh = state.spaces.mesh
    geo = mesh.interface
    n_s, tau = geo.normal, geo.tangent
    n_d = -n_s

    u, p, pm, pf = state.u, state.p, state.phi_m, state.phi_f
    tu = u.dofmap.interface_trace()
    uv, ug = u.on_trace(tu)
    tp = p.dofmap.interface_trace()
    pv, _ = p.on_trace(tp)
    tf = pf.dofmap.interface_trace()
    fv, fg = pf.on_trace(tf)
    tm = pm.dofmap.interface_trace()
    _, mg = pm.on_trace(tm)

    gamma = pf.dofmap.tag_dofs("Interface")

    flux_f = np.einsum("eqk,ek->eq", fg[..., 0, :], n_d)
    mass = np.einsum("eqa,ea->eq", uv, n_s) - pr.k_f / pr.mu * flux_f
    flux_m = pr.k_m / pr.mu * np.einsum("eqk,ek->eq", mg[..., 0, :], n_d)

    D = strain(ug)
    Dn = np.einsum("eqab,eb->eqa", D, n_s)
    normal = pv[..., 0] - 2 * pr.nu * np.einsum("eqa,ea->eq", Dn, n_s) - fv[..., 0] / pr.rho
    a = pr.alpha / np.sqrt(pr.k_f)
    bjs = (-2 * pr.nu * np.einsum("eqa,ea->eq", Dn, tau)
           - a * pr.nu * np.einsum("eqa,ea->eq", uv, tau))

    return InterfaceResiduals(
        no_exchange=_weak_norm(flux_m, tm, pm.dofmap.nscalar, pm.dofmap.tag_dofs("Interface")),
        mass=_weak_norm(mass, tf, pf.dofmap.nscalar, gamma),
        normal_force=_l2(normal, tp),
        bjs=_l2(bjs, tu))
