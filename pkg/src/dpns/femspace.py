"""Lagrange finite-element spaces on one or both subdomains.

Scalar dofs are numbered vertices first (ascending vertex id) and then edge
midpoints (ascending edge id). Vector spaces are component-major: the
x-components occupy ``[0, n)`` and the y-components ``[n, 2n)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Region, Tag
from .quadrature import (edge_rule, edge_to_reference, lagrange_basis,
                         local_dof_count, triangle_rule)

DOMAINS = {"Fluid": (Region.FLUID,), "Dual": (Region.DUAL,),
           "Both": (Region.FLUID, Region.DUAL)}
TAGS = {"GammaS": Tag.GAMMA_S, "GammaD": Tag.GAMMA_D, "Interface": Tag.INTERFACE}


@dataclass(frozen=True)
class ElementSpec:
    degree: int = 2
    arity: int = 1

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if self.arity not in (1, 2):
            raise ValueError(f"arity must be 1 (scalar) or 2 (vector), got {self.arity}")

    @property
    def nloc(self):
        return local_dof_count(self.degree)


class CellGeometry:
    """Affine maps, quadrature and physical basis gradients on a set of triangles."""

    def __init__(self, mesh, cells, degree):
        self.mesh = mesh
        self.cells = cells
        self.degree = degree
        self.quad = triangle_rule()
        p = mesh.nodes[mesh.triangles[cells]]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
        self.origin = p[:, 0]
        self.jac = J
        self.det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 1, 1] = J[:, 0, 0]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        self.inv = inv / self.det[:, None, None]
        self.values, ref_grads = lagrange_basis(degree, self.quad.points)
        # physical gradient: grad_x phi = J^{-T} grad_ref phi
        self.grads = np.einsum("cki,lqk->clqi", self.inv, ref_grads)
        self.wdet = self.det[:, None] * self.quad.weights[None, :]
        self.points = self.origin[:, None, :] + np.einsum("cij,qj->cqi", J, self.quad.points)

    def physical_grads(self, ref_grads, cells_idx):
        return np.einsum("cki,clqk->clqi", self.inv[cells_idx], ref_grads)


class DofMap:
    """Degree-of-freedom layout of a Lagrange space restricted to a subdomain.

    Parameters
    ----------
    mesh : Mesh
    spec : ElementSpec
    domain : {"Fluid", "Dual", "Both"}
    dirichlet : iterable of str
        Boundary tags whose dofs are constrained.
    value : callable, optional
        ``value(x, y)`` giving the prescribed data; returns shape (n,) for
        scalars and (n, 2) (or a pair of arrays) for vectors. Zero if omitted.
    allow_interface : bool
        Permit "Interface" among the constrained tags (auxiliary problems only).
    """

    def __init__(self, mesh, spec, domain, dirichlet=(), value=None, allow_interface=False):
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        dirichlet = tuple(dirichlet)
        for t in dirichlet:
            if t not in TAGS:
                raise ValueError(f"unknown boundary tag {t!r}")
            if t == "Interface" and not allow_interface:
                raise ValueError("interface conditions are natural in the coupled problem; "
                                 "'Interface' cannot be a Dirichlet tag")
        self.mesh = mesh
        self.spec = spec
        self.domain = domain
        self.dirichlet = dirichlet
        regions = DOMAINS[domain]
        self.cells = np.flatnonzero(np.isin(mesh.region, regions))

        tri = mesh.triangles[self.cells]
        verts = np.unique(tri)
        vmap = -np.ones(mesh.num_nodes, dtype=np.int64)
        vmap[verts] = np.arange(len(verts))
        table = [vmap[tri]]
        entities = [verts]
        points = [mesh.nodes[verts]]
        if spec.degree == 2:
            tedges = mesh.tri_edges[self.cells]
            eids = np.unique(tedges)
            emap = -np.ones(mesh.edges.shape[0], dtype=np.int64)
            emap[eids] = len(verts) + np.arange(len(eids))
            table.append(emap[tedges])
            entities.append(mesh.num_nodes + eids)
            e = mesh.edges[eids]
            points.append(0.5 * (mesh.nodes[e[:, 0]] + mesh.nodes[e[:, 1]]))
        self.cell_dofs = np.hstack(table)
        self.entities = np.concatenate(entities)
        self.points = np.vstack(points)
        self.nscalar = len(self.entities)
        self._entity_to_dof = {int(k): i for i, k in enumerate(self.entities)}

        self.constrained_scalar = np.zeros(self.nscalar, dtype=bool)
        for t in dirichlet:
            self.constrained_scalar[self.tag_dofs(t)] = True
        self.constrained = np.tile(self.constrained_scalar, spec.arity)
        self.values = np.zeros(self.ndofs)
        if value is not None and self.constrained_scalar.any():
            idx = np.flatnonzero(self.constrained_scalar)
            v = evaluate_field(value, self.points[idx], spec.arity)
            for a in range(spec.arity):
                self.values[a * self.nscalar + idx] = v[:, a]

    @property
    def ndofs(self):
        return self.nscalar * self.spec.arity

    @property
    def arity(self):
        return self.spec.arity

    @property
    def free(self):
        return np.flatnonzero(~self.constrained)

    def global_cell_dofs(self, component=0):
        return self.cell_dofs + component * self.nscalar

    def entity_dof(self, entity):
        return self._entity_to_dof.get(int(entity), -1)

    def tag_dofs(self, tag):
        """Scalar dofs lying on the closure of boundary edges with ``tag``."""
        code = TAGS[tag] if isinstance(tag, str) else tag
        edges = self.mesh.tagged_edges(code)
        if len(edges) == 0:
            return np.zeros(0, dtype=np.int64)
        ents = list(np.unique(edges).tolist())
        if self.spec.degree == 2:
            ents += (self.mesh.edge_index(edges) + self.mesh.num_nodes).tolist()
        dofs = [self.entity_dof(e) for e in ents]
        return np.array(sorted(d for d in dofs if d >= 0), dtype=np.int64)

    def interface_dofs(self, open_set=True):
        """Scalar dofs on Gamma; with ``open_set`` the endpoints on the outer boundary are dropped."""
        dofs = self.tag_dofs("Interface")
        if open_set and len(dofs):
            outer = np.union1d(self.tag_dofs("GammaS"), self.tag_dofs("GammaD"))
            dofs = np.setdiff1d(dofs, outer)
        return dofs

    @cached_property
    def geometry(self):
        return CellGeometry(self.mesh, self.cells, self.spec.degree)

    @cached_property
    def _cell_lookup(self):
        lookup = -np.ones(self.mesh.num_triangles, dtype=np.int64)
        lookup[self.cells] = np.arange(len(self.cells))
        return lookup

    def local_cell(self, triangles):
        idx = self._cell_lookup[np.asarray(triangles)]
        if np.any(idx < 0):
            raise ValueError("triangle outside the dofmap's subdomain")
        return idx

    def interface_trace(self, npoints=4):
        """Edge quadrature data on Gamma from this space's side.

        Returns a :class:`TraceData` for the adjacent cell on the subdomain the
        dofmap lives on (Fluid side when the domain is "Both").
        """
        return TraceData(self, npoints)

    def zero(self):
        return FeFunction(self, self.values.copy())


class TraceData:
    """Basis traces on interface edges, evaluated from one side."""

    def __init__(self, dm, npoints=4):
        geo = dm.mesh.interface
        if len(geo.length) == 0:
            raise ValueError("mesh has no interface edges")
        if dm.domain == "Dual":
            tris, locs = geo.dual_tri, geo.dual_local
        else:
            tris, locs = geo.fluid_tri, geo.fluid_local
        self.dofmap = dm
        self.geo = geo
        self.cells = dm.local_cell(tris)
        rule = edge_rule(npoints)
        self.rule = rule
        s = rule.points[:, 0]
        if dm.domain == "Dual":
            # the interface is parameterised along the Fluid orientation; the
            # Dual triangle traverses it in the opposite direction
            s_loc = 1.0 - s
        else:
            s_loc = s
        nloc = dm.spec.nloc
        nq = len(s)
        values = np.empty((len(tris), nloc, nq))
        ref_grads = np.empty((len(tris), nloc, nq, 2))
        for k in range(3):
            sel = locs == k
            if not sel.any():
                continue
            v, g = lagrange_basis(dm.spec.degree, edge_to_reference(k, s_loc))
            values[sel] = v
            ref_grads[sel] = g
        self.values = values
        self.grads = dm.geometry.physical_grads(ref_grads, self.cells)
        self.wlen = geo.length[:, None] * rule.weights[None, :]
        a = dm.mesh.nodes[geo.edges[:, 0]]
        b = dm.mesh.nodes[geo.edges[:, 1]]
        self.points = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        self.cell_dofs = dm.cell_dofs[self.cells]


def evaluate_field(expr, pts, arity):
    """Evaluate a pointwise field at points of shape (..., 2); returns (..., arity)."""
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    out = expr(pts[..., 0], pts[..., 1])
    if arity == 1:
        return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape))[..., None]
    if isinstance(out, (tuple, list)):
        out = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in out],
                       axis=-1)
    return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape + (2,)))


class FeFunction:
    """Coefficient vector attached to a :class:`DofMap`."""

    def __init__(self, dofmap, coef=None):
        self.dofmap = dofmap
        if coef is None:
            coef = np.zeros(dofmap.ndofs)
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (dofmap.ndofs,):
            raise ValueError(f"coefficient length {coef.shape} does not match "
                             f"{dofmap.ndofs} dofs")
        self.coef = coef

    def component(self, a):
        n = self.dofmap.nscalar
        return self.coef[a * n:(a + 1) * n]

    def cell_coef(self, a=0):
        """Local coefficients per cell for component ``a``, shape (ncell, nloc)."""
        return self.component(a)[self.dofmap.cell_dofs]

    def at_quadrature(self):
        """Values (ncell, nq, arity) and gradients (ncell, nq, arity, 2) at cell quadrature points."""
        geo = self.dofmap.geometry
        vals, grads = [], []
        for a in range(self.dofmap.arity):
            c = self.cell_coef(a)
            vals.append(np.einsum("cl,lq->cq", c, geo.values))
            grads.append(np.einsum("cl,clqi->cqi", c, geo.grads))
        return np.stack(vals, axis=-1), np.stack(grads, axis=2)

    def on_trace(self, trace):
        """Values (ne, nq, arity) and gradients (ne, nq, arity, 2) on interface edges."""
        vals, grads = [], []
        for a in range(self.dofmap.arity):
            c = self.component(a)[trace.cell_dofs]
            vals.append(np.einsum("el,elq->eq", c, trace.values))
            grads.append(np.einsum("el,elqi->eqi", c, trace.grads))
        return np.stack(vals, axis=-1), np.stack(grads, axis=2)

    def __call__(self, x, y):
        """Point evaluation by barycentric location (slow; for tests and exports)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        dm = self.dofmap
        p = dm.mesh.nodes[dm.mesh.triangles[dm.cells]]
        out = np.full((x.size, dm.arity), np.nan)
        geo = dm.geometry
        for k, (px, py) in enumerate(zip(x.ravel(), y.ravel())):
            ref = np.einsum("cij,cj->ci", geo.inv, np.array([px, py]) - geo.origin)
            lam = np.column_stack([1 - ref.sum(1), ref])
            inside = np.flatnonzero(lam.min(axis=1) >= -1e-12)
            if not len(inside):
                continue
            c = inside[0]
            v, _ = lagrange_basis(dm.spec.degree, ref[c][None, :])
            for a in range(dm.arity):
                out[k, a] = self.component(a)[dm.cell_dofs[c]] @ v[:, 0]
        return out[:, 0] if dm.arity == 1 else out

    def copy(self):
        return FeFunction(self.dofmap, self.coef.copy())


def interpolate(expr, dm):
    """Nodal Lagrange interpolation of a pointwise field (identity on discrete inputs)."""
    if isinstance(expr, FeFunction):
        if expr.dofmap is dm:
            return expr.copy()
        expr = _as_pointwise(expr)
    v = evaluate_field(expr, dm.points, dm.arity)
    coef = np.concatenate([v[:, a] for a in range(dm.arity)])
    return FeFunction(dm, coef)


def _as_pointwise(f):
    def g(x, y):
        return f(x, y)
    return g


def strain(grad):
    """Symmetric gradient of a vector gradient array (..., 2, 2)."""
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def norms(f, kind, exact=None, exact_grad=None):
    """Norms of a finite-element function or of its error against an exact field.

    Parameters
    ----------
    f : FeFunction
    kind : {"L2", "H1semi", "Dseminorm", "L2Gamma", "L4Gamma"}
    exact, exact_grad : callable, optional
        Pointwise field ``(x, y) -> values`` and its gradient
        ``(x, y) -> (..., arity, 2)``; when given the norm of ``f - exact`` is
        returned.
    """
    dm = f.dofmap
    if kind == "Dseminorm" and dm.arity != 2:
        raise ValueError("Dseminorm requires a vector field")
    if kind in ("L2Gamma", "L4Gamma"):
        if len(dm.tag_dofs("Interface")) == 0:
            raise ValueError("function has no interface dofs")
        tr = dm.interface_trace()
        vals, _ = f.on_trace(tr)
        if exact is not None:
            vals = vals - evaluate_field(exact, tr.points, dm.arity)
        mag2 = (vals ** 2).sum(axis=-1)
        if kind == "L2Gamma":
            return float(np.sqrt((tr.wlen * mag2).sum()))
        return float(((tr.wlen * mag2 ** 2).sum()) ** 0.25)

    geo = dm.geometry
    vals, grads = f.at_quadrature()
    if kind == "L2":
        if exact is not None:
            vals = vals - evaluate_field(exact, geo.points, dm.arity)
        return float(np.sqrt((geo.wdet[..., None] * vals ** 2).sum()))
    if kind not in ("H1semi", "Dseminorm"):
        raise ValueError(f"unknown norm kind {kind!r}")
    if exact_grad is not None:
        g = np.asarray(exact_grad(geo.points[..., 0], geo.points[..., 1]), dtype=float)
        grads = grads - g.reshape(grads.shape)
    if kind == "Dseminorm":
        grads = strain(grads)
    return float(np.sqrt((geo.wdet[..., None, None] * grads ** 2).sum()))


def integrate(f_values, dm):
    """Integrate quadrature-point values (ncell, nq) over the dofmap's cells."""
    return float((dm.geometry.wdet * f_values).sum())
