"""Sparse assembly of the coupled free-flow / dual-porosity system.

Unknowns are concatenated as ``[u_s | p_s | phi_m | phi_f]``. All element
loops are vectorised over cells; triplets are summed by scipy in a fixed
order, so repeated assembly is bit-reproducible.
"""

from dataclasses import dataclass, field, replace
from math import sqrt

import numpy as np
import scipy.io
import scipy.sparse as sp

from .femspace import DofMap, ElementSpec, FeFunction, evaluate_field


@dataclass(frozen=True)
class PhysicalParams:
    """Model coefficients; all must be strictly positive except where noted.

    ``alpha`` and ``sigma`` may be zero to switch off the slip and exchange
    terms respectively.
    """

    rho: float = 1.0
    nu: float = 1.0
    mu: float = 1.0
    k_m: float = 1.0
    k_f: float = 1.0
    sigma: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("rho", "nu", "mu", "k_m", "k_f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("sigma", "alpha"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")

    @property
    def bjs(self):
        """Slip coefficient alpha*rho*nu/sqrt(k_f) (trace(Pi) = N k_f)."""
        return self.alpha * self.rho * self.nu / sqrt(self.k_f)

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class SourceSpec:
    """Body forces and Dirichlet data, each a callable ``(x, y) -> values`` or None.

    ``f_m`` is a matrix-equation source that is zero in the physical model;
    it exists so that manufactured solutions can be verified.
    """

    f_s: object = None
    f_d: object = None
    f_m: object = None
    u_dir: object = None
    phi_m_dir: object = None
    phi_f_dir: object = None

    def scaled(self, c_s=1.0, c_d=1.0):
        """Copy with f_s scaled by c_s and f_d (and f_m) by c_d."""
        def scale(f, c):
            if f is None:
                return None
            return lambda x, y: _times(f(x, y), c)
        return SourceSpec(scale(self.f_s, c_s), scale(self.f_d, c_d), scale(self.f_m, c_d),
                          self.u_dir, self.phi_m_dir, self.phi_f_dir)


def _times(v, c):
    if isinstance(v, (tuple, list)):
        return type(v)(c * np.asarray(vi) for vi in v)
    return c * np.asarray(v)


BLOCKS = ("u", "p", "phi_m", "phi_f")


class CoupledSpaces:
    """Dof maps of the coupled problem and their global offsets.

    Taylor-Hood P2/P1 on Omega_s (velocity constrained on Gamma_s) and P2 for
    both porous pressures on Omega_d (constrained on Gamma_d).
    """

    def __init__(self, mesh, sources=None, pressure_degree=1):
        src = sources or SourceSpec()
        self.mesh = mesh
        self.u = DofMap(mesh, ElementSpec(2, 2), "Fluid", ["GammaS"], src.u_dir)
        self.p = DofMap(mesh, ElementSpec(pressure_degree, 1), "Fluid")
        self.phi_m = DofMap(mesh, ElementSpec(2, 1), "Dual", ["GammaD"], src.phi_m_dir)
        self.phi_f = DofMap(mesh, ElementSpec(2, 1), "Dual", ["GammaD"], src.phi_f_dir)
        sizes = [self[b].ndofs for b in BLOCKS]
        starts = np.concatenate([[0], np.cumsum(sizes)])
        self.ranges = {b: slice(int(starts[k]), int(starts[k + 1])) for k, b in enumerate(BLOCKS)}
        self.ndofs = int(starts[-1])
        self.constrained = np.concatenate([self[b].constrained for b in BLOCKS])
        self.values = np.concatenate([self[b].values for b in BLOCKS])

    def __getitem__(self, name):
        return getattr(self, name)

    @property
    def free(self):
        return np.flatnonzero(~self.constrained)

    @property
    def homogeneous(self):
        return not np.any(self.values[self.constrained])

    def split(self, x):
        """FeFunctions for each block of a global coefficient vector."""
        return {b: FeFunction(self[b], np.array(x[self.ranges[b]])) for b in BLOCKS}

    def join(self, funcs):
        x = np.zeros(self.ndofs)
        for b in BLOCKS:
            if b in funcs and funcs[b] is not None:
                x[self.ranges[b]] = funcs[b].coef
        return x


@dataclass
class BlockSystem:
    """Assembled operator and right-hand side over ``[u_s | p_s | phi_m | phi_f]``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    ranges: dict
    constrained: np.ndarray
    values: np.ndarray
    dirichlet_applied: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def block(self, row, col):
        return self.matrix[self.ranges[row], self.ranges[col]]


# -- element kernels --------------------------------------------------------

def _triplets(rows, cols, vals):
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    return r, c, vals.ravel()


def _csr(parts, shape):
    if not parts:
        return sp.csr_matrix(shape)
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    m = sp.coo_matrix((v, (r, c)), shape=shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def stiffness_matrix(dm, scale=1.0):
    """scale * (grad phi_j, grad phi_i) for a scalar space."""
    g = dm.geometry
    loc = scale * np.einsum("cq,ciqk,cjqk->cij", g.wdet, g.grads, g.grads, optimize=True)
    return _csr([_triplets(dm.cell_dofs, dm.cell_dofs, loc)], (dm.ndofs, dm.ndofs))


def mass_matrix(dm, scale=1.0):
    """scale * (phi_j, phi_i); block diagonal over components for vector spaces."""
    g = dm.geometry
    loc = scale * np.einsum("cq,iq,jq->cij", g.wdet, g.values, g.values, optimize=True)
    parts = [_triplets(dm.global_cell_dofs(a), dm.global_cell_dofs(a), loc)
             for a in range(dm.arity)]
    return _csr(parts, (dm.ndofs, dm.ndofs))


def vector_stiffness_matrix(dm, scale=1.0):
    """scale * (grad u, grad v) for a vector space (componentwise Laplacian)."""
    g = dm.geometry
    loc = scale * np.einsum("cq,ciqk,cjqk->cij", g.wdet, g.grads, g.grads, optimize=True)
    parts = [_triplets(dm.global_cell_dofs(a), dm.global_cell_dofs(a), loc)
             for a in range(dm.arity)]
    return _csr(parts, (dm.ndofs, dm.ndofs))


def strain_matrix(dm, scale=1.0):
    """scale * (D(u), D(v)) for a vector space."""
    g = dm.geometry
    lap = np.einsum("cq,ciqk,cjqk->cij", g.wdet, g.grads, g.grads, optimize=True)
    parts = []
    for b in range(2):          # test component
        for a in range(2):      # trial component
            cross = np.einsum("cq,ciq,cjq->cij", g.wdet, g.grads[..., a], g.grads[..., b],
                              optimize=True)
            loc = 0.5 * scale * (cross + (lap if a == b else 0.0))
            parts.append(_triplets(dm.global_cell_dofs(b), dm.global_cell_dofs(a), loc))
    return _csr(parts, (dm.ndofs, dm.ndofs))


def divergence_matrix(dv, dq, scale=1.0):
    """scale * (div v_j, q_i), shape (nq_dofs, nv_dofs)."""
    if not np.array_equal(dv.cells, dq.cells):
        raise ValueError("velocity and pressure spaces must share cells")
    g = dv.geometry
    qv = dq.geometry.values
    parts = []
    for a in range(2):
        loc = scale * np.einsum("cq,iq,cjq->cij", g.wdet, qv, g.grads[..., a], optimize=True)
        parts.append(_triplets(dq.cell_dofs, dv.global_cell_dofs(a), loc))
    return _csr(parts, (dq.ndofs, dv.ndofs))


def interface_normal_matrix(dv, dphi, scale=1.0):
    """scale * <phi_i, v_j . n_s>_Gamma, shape (nphi, nv)."""
    tv = dv.interface_trace()
    tp = dphi.interface_trace()
    n = dv.mesh.interface.normal
    parts = []
    for a in range(2):
        loc = scale * np.einsum("eq,eiq,ejq,e->eij", tv.wlen, tp.values, tv.values, n[:, a],
                                optimize=True)
        parts.append(_triplets(tp.cell_dofs, tv.cell_dofs + a * dv.nscalar, loc))
    return _csr(parts, (dphi.ndofs, dv.ndofs))


def interface_tangential_matrix(dv, scale=1.0):
    """scale * <u . tau, v . tau>_Gamma."""
    tv = dv.interface_trace()
    t = dv.mesh.interface.tangent
    base = np.einsum("eq,eiq,ejq->eij", tv.wlen, tv.values, tv.values, optimize=True)
    parts = []
    for b in range(2):
        for a in range(2):
            loc = scale * base * (t[:, a] * t[:, b])[:, None, None]
            parts.append(_triplets(tv.cell_dofs + b * dv.nscalar, tv.cell_dofs + a * dv.nscalar,
                                   loc))
    return _csr(parts, (dv.ndofs, dv.ndofs))


def convection_matrix(dv, beta):
    """Matrix of u -> b(beta; u, v) = ((beta.grad)u, v) + 1/2 ((div beta) u, v)."""
    _check_velocity(beta, dv)
    g = dv.geometry
    bv, bg = beta.at_quadrature()
    div = bg[:, :, 0, 0] + bg[:, :, 1, 1]
    adv = np.einsum("cqk,cjqk->cjq", bv, g.grads)
    loc = np.einsum("cq,iq,cjq->cij", g.wdet, g.values, adv + 0.5 * div[:, None, :] * g.values,
                    optimize=True)
    parts = [_triplets(dv.global_cell_dofs(a), dv.global_cell_dofs(a), loc) for a in range(2)]
    return _csr(parts, (dv.ndofs, dv.ndofs))


def convection_jacobian(dv, u):
    """Matrix of d -> b(d; u, v) = ((d.grad)u, v) + 1/2 ((div d) u, v)."""
    _check_velocity(u, dv)
    g = dv.geometry
    uv, ug = u.at_quadrature()
    parts = []
    for b in range(2):
        for a in range(2):
            # phi_i [phi_j du_b/dx_a + 1/2 dphi_j/dx_a u_b]
            loc = np.einsum("cq,iq,jq->cij", g.wdet * ug[:, :, b, a], g.values, g.values,
                            optimize=True)
            loc += 0.5 * np.einsum("cq,iq,cjq->cij", g.wdet * uv[:, :, b], g.values,
                                   g.grads[..., a], optimize=True)
            parts.append(_triplets(dv.global_cell_dofs(b), dv.global_cell_dofs(a), loc))
    return _csr(parts, (dv.ndofs, dv.ndofs))


def load_vector(dm, f, scale=1.0):
    """scale * (f, v_i) for a pointwise field f."""
    g = dm.geometry
    vals = evaluate_field(f, g.points, dm.arity)
    out = np.zeros(dm.ndofs)
    for a in range(dm.arity):
        loc = scale * np.einsum("cq,iq,cq->ci", g.wdet, g.values, vals[..., a], optimize=True)
        np.add.at(out, dm.global_cell_dofs(a).ravel(), loc.ravel())
    return out


def _check_velocity(f, dv):
    dm = f.dofmap
    if dm is dv:
        return
    same = (dm.domain == dv.domain and dm.spec == dv.spec and dm.ndofs == dv.ndofs
            and dm.mesh is dv.mesh)
    if not same:
        raise ValueError("convecting field must live in the velocity space of this problem")


# -- block operators --------------------------------------------------------

def _embed(spaces, blocks):
    """Place block matrices {(row, col): M} into a global sparse matrix."""
    parts = []
    for (rb, cb), M in blocks.items():
        M = M.tocoo()
        parts.append((M.row + spaces.ranges[rb].start, M.col + spaces.ranges[cb].start, M.data))
    return _csr(parts, (spaces.ndofs, spaces.ndofs))


def assemble_a(spaces, params):
    """Global matrix of a_s + a_d + a_Gamma.

    The exchange terms follow the sign pattern (phi_m - phi_f, psi_m) +
    (phi_f - phi_m, psi_f); the Gamma coupling enters as +G^T in the velocity
    rows and -G in the phi_f rows.
    """
    pr = params
    if len(spaces.mesh.interface.length) == 0:
        raise ValueError("assembly error: mesh has no interface edges")
    dv, dm_, df = spaces.u, spaces.phi_m, spaces.phi_f
    A_s = strain_matrix(dv, 2.0 * pr.rho * pr.nu)
    if pr.bjs > 0:
        A_s = A_s + interface_tangential_matrix(dv, pr.bjs)
    ex = pr.sigma * pr.k_m / pr.mu
    M = mass_matrix(dm_, ex)
    G = interface_normal_matrix(dv, df)
    blocks = {
        ("u", "u"): A_s,
        ("phi_m", "phi_m"): stiffness_matrix(dm_, pr.k_m / pr.mu) + M,
        ("phi_f", "phi_f"): stiffness_matrix(df, pr.k_f / pr.mu) + M,
        ("phi_m", "phi_f"): -M,
        ("phi_f", "phi_m"): -M,
        ("u", "phi_f"): G.T.tocsr(),
        ("phi_f", "u"): -G,
    }
    return _embed(spaces, blocks)


def assemble_b(beta, spaces):
    """Velocity-block matrix of the skew-symmetrised convection b(beta; ., .)."""
    return convection_matrix(spaces.u, beta)


def assemble_newton(u, spaces):
    """Velocity-block Newton correction b(d; u, v) linearised at ``u``."""
    return convection_jacobian(spaces.u, u)


def assemble_d(spaces, params):
    """d(v, q) = -rho (div v, q), shape (n_p, n_u)."""
    return divergence_matrix(spaces.u, spaces.p, -params.rho)


def assemble_rhs(sources, spaces, params):
    """rho (f_s, v) + (f_d, psi_f) [+ (f_m, psi_m)] as a global vector."""
    b = np.zeros(spaces.ndofs)
    if sources is None:
        return b
    if sources.f_s is not None:
        b[spaces.ranges["u"]] += load_vector(spaces.u, sources.f_s, params.rho)
    if sources.f_d is not None:
        b[spaces.ranges["phi_f"]] += load_vector(spaces.phi_f, sources.f_d)
    if sources.f_m is not None:
        b[spaces.ranges["phi_m"]] += load_vector(spaces.phi_m, sources.f_m)
    return b


def linear_operator(spaces, params):
    """a(., .) + d(v, p) - d(u, q) as one global matrix (no convection)."""
    D = assemble_d(spaces, params)
    return assemble_a(spaces, params) + _embed(spaces, {("u", "p"): D.T.tocsr(),
                                                        ("p", "u"): -D})


def assemble_system(spaces, params, sources, beta=None, newton_at=None, base=None, rhs=None):
    """Assemble the (linearised) coupled operator before Dirichlet elimination.

    Parameters
    ----------
    beta : FeFunction, optional
        Convecting velocity for the Picard term b(beta; u, v); omitted when None.
    newton_at : FeFunction, optional
        Adds the Newton block b(d; newton_at, v).
    base, rhs : optional
        Precomputed :func:`linear_operator` and :func:`assemble_rhs` to reuse.
    """
    A = base if base is not None else linear_operator(spaces, params)
    extra = {}
    if beta is not None:
        extra[("u", "u")] = assemble_b(beta, spaces)
    if newton_at is not None:
        N = assemble_newton(newton_at, spaces)
        extra[("u", "u")] = extra[("u", "u")] + N if extra else N
    if extra:
        A = A + _embed(spaces, extra)
    b = rhs if rhs is not None else assemble_rhs(sources, spaces, params)
    return BlockSystem(A.tocsr(), np.array(b), dict(spaces.ranges), spaces.constrained.copy(),
                       spaces.values.copy())


def apply_dirichlet(sys_):
    """Symmetric elimination of constrained dofs.

    Constrained rows and columns are replaced by identity rows/columns, the
    prescribed values are written into the right-hand side and their column
    contributions are moved to the free rows.
    """
    if sys_.dirichlet_applied or not sys_.constrained.any():
        return replace(sys_, dirichlet_applied=True)
    A = sys_.matrix.tocsr()
    c = sys_.constrained
    g = np.where(c, sys_.values, 0.0)
    rhs = sys_.rhs - A @ g
    rhs[c] = sys_.values[c]
    keep = sp.diags((~c).astype(float))
    A = keep @ A @ keep + sp.diags(c.astype(float))
    A = A.tocsr()
    A.eliminate_zeros()
    return replace(sys_, matrix=A, rhs=rhs, dirichlet_applied=True)


def write_matrix_market(path, sys_):
    """Dump the operator in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), sys_.matrix.tocoo(), comment="dpns block system [u|p|phi_m|phi_f]")
