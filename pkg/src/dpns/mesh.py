"""Matched two-subdomain triangulations with boundary and interface tags.

The default layout stacks the free-flow region Omega_s = (0,1)x(1,2) on top
of the dual-porosity region Omega_d = (0,1)x(0,1); the flat interface
Gamma = (0,1)x{1} carries node ids shared by both regions.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np


class Region(IntEnum):
    FLUID = 0
    DUAL = 1


class Tag(IntEnum):
    GAMMA_S = 0
    GAMMA_D = 1
    INTERFACE = 2


REGION_NAMES = {Region.FLUID: "Fluid", Region.DUAL: "Dual"}
TAG_NAMES = {Tag.GAMMA_S: "GammaS", Tag.GAMMA_D: "GammaD", Tag.INTERFACE: "Interface"}


@dataclass(frozen=True)
class RectangleGeometry:
    """Two axis-aligned rectangles sharing the horizontal segment y = y_interface."""

    x0: float = 0.0
    x1: float = 1.0
    y_bottom: float = 0.0
    y_interface: float = 1.0
    y_top: float = 2.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y_top > self.y_interface > self.y_bottom):
            raise ValueError(f"degenerate rectangle geometry: {self}")

    @property
    def interface_length(self):
        return self.x1 - self.x0


@dataclass(frozen=True)
class InterfaceGeometry:
    """Per-interface-edge geometric data.

    ``normal`` is n_s (Fluid to Dual) and ``tangent`` is (-n2, n1).
    ``fluid_tri``/``dual_tri`` index the adjacent triangles and
    ``fluid_local``/``dual_local`` give the local edge index (0, 1 or 2 for
    local vertex pairs (0,1), (1,2), (2,0)) inside each of them.
    """

    edges: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    length: np.ndarray
    fluid_tri: np.ndarray
    fluid_local: np.ndarray
    dual_tri: np.ndarray
    dual_local: np.ndarray


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of Omega_s, Omega_d and their interface.

    Attributes
    ----------
    nodes : ndarray, shape (nv, 2)
    triangles : ndarray, shape (nt, 3), counterclockwise
    region : ndarray, shape (nt,), values of :class:`Region`
    boundary_edges : ndarray, shape (nb, 2)
    boundary_tags : ndarray, shape (nb,), values of :class:`Tag`
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "region", _frozen(self.region, np.int64))
        object.__setattr__(self, "boundary_edges",
                           _frozen(np.reshape(self.boundary_edges, (-1, 2)), np.int64))
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int64))

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def h(self):
        """Maximum over triangles of the longest edge length."""
        p = self.nodes[self.triangles]
        lengths = np.stack([np.linalg.norm(p[:, j] - p[:, i], axis=1)
                            for i, j in ((0, 1), (1, 2), (2, 0))], axis=1)
        return float(lengths.max())

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
        key = np.sort(local, axis=2).reshape(-1, 2)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        return _frozen(edges, np.int64), _frozen(inverse.reshape(-1, 3), np.int64)

    @property
    def edges(self):
        """Unique edges as sorted node pairs, shape (ne, 2)."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """Edge ids of local edges (0,1), (1,2), (2,0) per triangle."""
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self):
        """For each edge the adjacent triangles and local edge indices (-1 if absent)."""
        ne = self.edges.shape[0]
        tri = -np.ones((ne, 2), dtype=np.int64)
        loc = -np.ones((ne, 2), dtype=np.int64)
        count = np.zeros(ne, dtype=np.int64)
        for t in range(self.num_triangles):
            for k in range(3):
                e = self.tri_edges[t, k]
                c = count[e]
                if c < 2:
                    tri[e, c] = t
                    loc[e, c] = k
                count[e] += 1
        return tri, loc, count

    def edge_index(self, pairs):
        """Look up edge ids for node pairs (any orientation)."""
        pairs = np.sort(np.reshape(pairs, (-1, 2)), axis=1)
        lookup = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        return np.array([lookup[tuple(p)] for p in pairs.tolist()], dtype=np.int64)

    def region_measure(self, region):
        return float(self.signed_areas[self.region == region].sum())

    def tagged_edges(self, tag):
        return self.boundary_edges[self.boundary_tags == tag]

    @cached_property
    def interface(self):
        """Interface geometry with n_s computed as the outward normal of the Fluid side."""
        edges = self.tagged_edges(Tag.INTERFACE)
        ids = self.edge_index(edges) if len(edges) else np.zeros(0, dtype=np.int64)
        tri, loc, _ = self.edge_triangles
        n = len(ids)
        fluid_tri = np.empty(n, dtype=np.int64)
        fluid_local = np.empty(n, dtype=np.int64)
        dual_tri = np.empty(n, dtype=np.int64)
        dual_local = np.empty(n, dtype=np.int64)
        for k, e in enumerate(ids):
            for side in range(2):
                t = tri[e, side]
                if t < 0:
                    raise ValueError(f"interface edge {edges[k].tolist()} has only one adjacent triangle")
                if self.region[t] == Region.FLUID:
                    fluid_tri[k], fluid_local[k] = t, loc[e, side]
                else:
                    dual_tri[k], dual_local[k] = t, loc[e, side]
        # orient each edge along the Fluid triangle's counterclockwise boundary
        a = self.triangles[fluid_tri, fluid_local]
        b = self.triangles[fluid_tri, (fluid_local + 1) % 3]
        d = self.nodes[b] - self.nodes[a]
        length = np.linalg.norm(d, axis=1)
        t_ccw = d / length[:, None]
        normal = np.column_stack([t_ccw[:, 1], -t_ccw[:, 0]])
        tangent = np.column_stack([-normal[:, 1], normal[:, 0]])
        return InterfaceGeometry(
            edges=_frozen(np.column_stack([a, b]), np.int64),
            normal=_frozen(normal, float), tangent=_frozen(tangent, float),
            length=_frozen(length, float),
            fluid_tri=_frozen(fluid_tri, np.int64), fluid_local=_frozen(fluid_local, np.int64),
            dual_tri=_frozen(dual_tri, np.int64), dual_local=_frozen(dual_local, np.int64))


def build_two_domain_mesh(nx, ny, geometry=None, pattern="right"):
    """Structured triangulation of the stacked Fluid/Dual rectangles.

    Parameters
    ----------
    nx, ny : int
        Cells per subdomain in x and in y (each subdomain gets ny rows).
    geometry : RectangleGeometry, optional
    pattern : {"right", "crossed"}
        "right" splits each cell along its rising diagonal into 2 triangles;
        "crossed" adds the cell centre and splits into 4.

    Returns
    -------
    Mesh
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    if pattern not in ("right", "crossed"):
        raise ValueError(f"unknown triangulation pattern {pattern!r}")
    nx, ny = int(nx), int(ny)
    g = geometry or RectangleGeometry()
    xs = np.linspace(g.x0, g.x1, nx + 1)
    ys = np.concatenate([np.linspace(g.y_bottom, g.y_interface, ny + 1),
                         np.linspace(g.y_interface, g.y_top, ny + 1)[1:]])
    X, Y = np.meshgrid(xs, ys)
    nodes = [np.column_stack([X.ravel(), Y.ravel()])]
    nrow = 2 * ny

    def vid(i, j):
        return j * (nx + 1) + i

    tris, region = [], []
    ncorner = (nx + 1) * (nrow + 1)
    centres = []
    for j in range(nrow):
        reg = Region.DUAL if j < ny else Region.FLUID
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if pattern == "right":
                tris += [(v00, v10, v11), (v00, v11, v01)]
                region += [reg, reg]
            else:
                c = ncorner + len(centres)
                centres.append(((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2))
                tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
                region += [reg] * 4
    if centres:
        nodes.append(np.array(centres))

    bedges, btags = [], []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append(Tag.GAMMA_D)
        bedges.append((vid(i + 1, nrow), vid(i, nrow)))
        btags.append(Tag.GAMMA_S)
        bedges.append((vid(i + 1, ny), vid(i, ny)))
        btags.append(Tag.INTERFACE)
    for j in range(nrow):
        tag = Tag.GAMMA_D if j < ny else Tag.GAMMA_S
        bedges.append((vid(0, j + 1), vid(0, j)))
        btags.append(tag)
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        btags.append(tag)

    return Mesh(np.vstack(nodes), np.array(tris), np.array(region),
                np.array(bedges), np.array(btags))


def refine_uniform(m):
    """Split every triangle into four congruent children; tags are inherited."""
    nv = m.num_nodes
    edges = m.edges
    mid = 0.5 * (m.nodes[edges[:, 0]] + m.nodes[edges[:, 1]])
    nodes = np.vstack([m.nodes, mid])
    te = m.tri_edges + nv
    v0, v1, v2 = m.triangles.T
    m01, m12, m20 = te.T
    tris = np.stack([
        np.column_stack([v0, m01, m20]),
        np.column_stack([m01, v1, m12]),
        np.column_stack([m20, m12, v2]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    region = np.repeat(m.region, 4)
    if len(m.boundary_edges):
        emid = m.edge_index(m.boundary_edges) + nv
        a, b = m.boundary_edges.T
        bedges = np.stack([np.column_stack([a, emid]), np.column_stack([emid, b])],
                          axis=1).reshape(-1, 2)
        btags = np.repeat(m.boundary_tags, 2)
    else:
        bedges, btags = np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return Mesh(nodes, tris, region, bedges, btags)


def validate(m):
    """Check the mesh invariants and return a list of violation messages.

    An empty list means the mesh is well formed.
    """
    problems = []
    bad = np.flatnonzero(m.signed_areas <= 0.0)
    for t in bad:
        problems.append(f"negative area: triangle {int(t)} has signed area {m.signed_areas[t]:.3e}")

    tri, _, count = m.edge_triangles
    tagged = {}
    for e, tag in zip(m.boundary_edges.tolist(), m.boundary_tags.tolist()):
        tagged[tuple(sorted(e))] = tag
    for e, (a, b) in enumerate(m.edges.tolist()):
        key = (a, b)
        if count[e] > 2:
            problems.append(f"non-manifold edge {key} shared by {int(count[e])} triangles")
            continue
        if count[e] == 1:
            t = tri[e, 0]
            want = Tag.GAMMA_S if m.region[t] == Region.FLUID else Tag.GAMMA_D
            tag = tagged.get(key)
            if tag is None:
                problems.append(f"boundary edge {key} untagged")
            elif tag != want:
                problems.append(f"boundary edge {key} tagged {TAG_NAMES[Tag(tag)]}, "
                                f"expected {TAG_NAMES[want]}")
            continue
        regs = {int(m.region[tri[e, 0]]), int(m.region[tri[e, 1]])}
        tag = tagged.get(key)
        if regs == {Region.FLUID, Region.DUAL}:
            if tag != Tag.INTERFACE:
                problems.append(f"interface edge {key} untagged")
        elif tag is not None:
            problems.append(f"interior edge {key} carries tag {TAG_NAMES[Tag(tag)]}")

    p = m.nodes[m.triangles]
    longest = max(np.linalg.norm(p[:, j] - p[:, i], axis=1).max()
                  for i, j in ((0, 1), (1, 2), (2, 0)))
    if abs(longest - m.h) > 1e-14 * max(1.0, longest):
        problems.append(f"h={m.h} differs from longest edge {longest}")
    return problems


def write_vtk(path, m, point_data=None, title="dpns mesh"):
    """Write the mesh (and optional nodal fields) as legacy-VTK ASCII.

    ``point_data`` maps names to arrays of shape (nv,) or (nv, 2).
    """
    point_data = point_data or {}
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {m.num_nodes} double"]
    lines += [f"{x:.16e} {y:.16e} 0.0" for x, y in m.nodes]
    lines.append(f"CELLS {m.num_triangles} {4 * m.num_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in m.triangles]
    lines.append(f"CELL_TYPES {m.num_triangles}")
    lines += ["5"] * m.num_triangles
    lines += [f"CELL_DATA {m.num_triangles}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in m.region]
    if point_data:
        lines.append(f"POINT_DATA {m.num_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.16e}" for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{v[0]:.16e} {v[1]:.16e} 0.0" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
