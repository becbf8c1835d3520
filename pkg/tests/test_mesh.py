import math

import numpy as np
import pytest

from dpns.mesh import (Mesh, Region, Tag, build_two_domain_mesh, refine_uniform, validate,
                       write_vtk)


def test_one_cell_counts():
    m = build_two_domain_mesh(1, 1)
    assert m.num_triangles == 4
    assert np.sum(m.region == Region.FLUID) == 2
    assert np.sum(m.region == Region.DUAL) == 2
    assert len(m.interface.edges) == 1


def test_four_by_four():
    m = build_two_domain_mesh(4, 4)
    assert m.num_triangles == 64
    assert len(m.interface.edges) == 4
    assert m.h == pytest.approx(math.sqrt(2) / 4, rel=1e-15)


def test_interface_orientation():
    g = build_two_domain_mesh(2, 2).interface
    assert np.allclose(g.normal, [0.0, -1.0])
    assert np.allclose(g.tangent, [1.0, 0.0])
    # tau = (-n2, n1)
    assert np.allclose(g.tangent, np.column_stack([-g.normal[:, 1], g.normal[:, 0]]))
    assert np.allclose(np.einsum("ea,ea->e", g.normal, g.tangent), 0.0)


@pytest.mark.parametrize("pattern", ["right", "crossed"])
@pytest.mark.parametrize("n", [1, 3, 8])
def test_invariants(pattern, n):
    m = build_two_domain_mesh(n, n, pattern=pattern)
    assert validate(m) == []
    assert np.all(m.signed_areas > 0)
    fluid = m.signed_areas[m.region == Region.FLUID].sum()
    dual = m.signed_areas[m.region == Region.DUAL].sum()
    assert fluid == pytest.approx(1.0, rel=1e-12)
    assert dual == pytest.approx(1.0, rel=1e-12)
    assert m.interface.length.sum() == pytest.approx(1.0, rel=1e-12)
    # interface edges pair one Fluid and one Dual triangle
    assert np.all(m.region[m.interface.fluid_tri] == Region.FLUID)
    assert np.all(m.region[m.interface.dual_tri] == Region.DUAL)


def test_crossed_triangle_count():
    m = build_two_domain_mesh(2, 3, pattern="crossed")
    assert m.num_triangles == 2 * 4 * 2 * 3


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, 0), (-2, 2), (1.5, 1)])
def test_invalid_counts(nx, ny):
    with pytest.raises(ValueError):
        build_two_domain_mesh(nx, ny)


def test_refine():
    m = build_two_domain_mesh(1, 1)
    r = refine_uniform(m)
    assert r.num_triangles == 16
    m2 = build_two_domain_mesh(2, 2)
    assert m2.h == pytest.approx(math.sqrt(2) / 2, rel=1e-15)
    assert refine_uniform(m2).h == pytest.approx(math.sqrt(2) / 4, rel=1e-15)
    for k in range(3):
        assert validate(r) == []
        assert r.interface.length.sum() == pytest.approx(1.0, rel=1e-12)
        assert r.h == pytest.approx(m.h / 2 ** (k + 1), rel=1e-14)
        r = refine_uniform(r)


def test_refine_matches_structured_counts():
    r = refine_uniform(refine_uniform(build_two_domain_mesh(1, 1)))
    s = build_two_domain_mesh(4, 4)
    assert r.num_triangles == s.num_triangles
    assert r.num_nodes == s.num_nodes
    for tag in Tag:
        assert np.sum(r.boundary_tags == tag) == np.sum(s.boundary_tags == tag)


def test_validate_flipped_triangle():
    m = build_two_domain_mesh(2, 2)
    tris = m.triangles.copy()
    tris[3] = tris[3][[0, 2, 1]]
    bad = Mesh(m.nodes, tris, m.region, m.boundary_edges, m.boundary_tags)
    problems = validate(bad)
    assert problems and problems[0].startswith("negative area: triangle 3")


def test_validate_missing_interface_tag():
    m = build_two_domain_mesh(2, 2)
    keep = np.ones(len(m.boundary_tags), dtype=bool)
    keep[np.flatnonzero(m.boundary_tags == Tag.INTERFACE)[0]] = False
    bad = Mesh(m.nodes, m.triangles, m.region, m.boundary_edges[keep], m.boundary_tags[keep])
    assert any("interface edge" in p and "untagged" in p for p in validate(bad))


def test_mesh_is_immutable():
    m = build_two_domain_mesh(1, 1)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 5.0


def test_write_vtk(tmp_path):
    m = build_two_domain_mesh(2, 2)
    p = tmp_path / "m.vtk"
    write_vtk(p, m, {"s": np.arange(m.num_nodes, dtype=float),
                     "v": np.ones((m.num_nodes, 2))})
    text = p.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 2.0"
    assert f"CELLS {m.num_triangles} {4 * m.num_triangles}" in text
    assert "SCALARS region int 1" in text
    assert "VECTORS v double" in text
