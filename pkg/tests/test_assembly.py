import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dpns.assembly import (BlockSystem, CoupledSpaces, PhysicalParams, SourceSpec, apply_dirichlet,
                           assemble_a, assemble_b, assemble_d, assemble_rhs, assemble_system,
                           linear_operator, stiffness_matrix, write_matrix_market)
from dpns.femspace import DofMap, ElementSpec, FeFunction, interpolate, norms
from dpns.mesh import Mesh, Region, Tag, build_two_domain_mesh


@pytest.fixture(scope="module")
def spaces():
    return CoupledSpaces(build_two_domain_mesh(3, 3))


def interface_convection(beta, v):
    tr = v.dofmap.interface_trace()
    bv, _ = beta.on_trace(tr)
    vv, _ = v.on_trace(tr)
    bn = np.einsum("eqa,ea->eq", bv, v.dofmap.mesh.interface.normal)
    return 0.5 * float((tr.wlen * bn * (vv ** 2).sum(-1)).sum())


def random_block(spaces, name, rng):
    dm = spaces[name]
    x = rng.uniform(-1, 1, dm.ndofs)
    x[dm.constrained] = 0.0
    return FeFunction(dm, x)


def test_reference_triangle_laplacian():
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
             np.array([Region.DUAL]), np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int))
    K = stiffness_matrix(DofMap(m, ElementSpec(1, 1), "Dual")).toarray()
    expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
    assert np.allclose(K, expected, atol=1e-15, rtol=0)


def test_interface_coupling_antisymmetric(spaces):
    A = linear_operator(spaces, PhysicalParams())
    r = spaces.ranges
    up = A[r["u"], r["phi_f"]].toarray()
    pu = A[r["phi_f"], r["u"]].toarray()
    assert np.abs(up).max() > 0
    assert np.array_equal(up, -pu.T)


def test_alpha_zero_interface_form_vanishes(spaces):
    params = PhysicalParams(alpha=0.0)
    A = assemble_a(spaces, params)
    rng = np.random.default_rng(0)
    r = spaces.ranges
    for _ in range(10):
        x = np.zeros(spaces.ndofs)
        x[r["u"]] = rng.uniform(-1, 1, r["u"].stop - r["u"].start)
        x[r["phi_f"]] = rng.uniform(-1, 1, r["phi_f"].stop - r["phi_f"].start)
        xu, xf = x.copy(), x.copy()
        xu[r["phi_f"]] = 0.0
        xf[r["u"]] = 0.0
        gamma = x @ A @ x - xu @ A @ xu - xf @ A @ xf
        assert abs(gamma) <= 1e-12 * (x @ A @ x)


def test_sigma_zero_decouples_porosities(spaces):
    A = assemble_a(spaces, PhysicalParams(sigma=0.0))
    r = spaces.ranges
    assert not A[r["phi_m"], r["phi_f"]].toarray().any()
    assert not A[r["phi_f"], r["phi_m"]].toarray().any()


def test_exchange_positivity(spaces):
    params = PhysicalParams(sigma=2.5, k_m=0.4, mu=1.3)
    diff = (assemble_a(spaces, params) - assemble_a(spaces, params.with_(sigma=0.0))).tocsr()
    r = spaces.ranges
    rng = np.random.default_rng(1)
    for _ in range(5):
        pm = random_block(spaces, "phi_m", rng)
        pf = random_block(spaces, "phi_f", rng)
        x = spaces.join({"phi_m": pm, "phi_f": pf})
        jump = FeFunction(spaces.phi_m, pm.coef - pf.coef)
        expected = params.sigma * params.k_m / params.mu * norms(jump, "L2") ** 2
        assert x @ diff @ x == pytest.approx(expected, rel=1e-12)
        assert x @ diff @ x >= 0
    # sign pattern (phi_m - phi_f, psi_m) + (phi_f - phi_m, psi_f)
    assert np.allclose(diff[r["phi_m"], r["phi_f"]].toarray(), -diff[r["phi_m"], r["phi_m"]].toarray())


def test_missing_interface_is_an_error():
    m = build_two_domain_mesh(2, 2)
    keep = m.boundary_tags != Tag.INTERFACE
    cut = Mesh(m.nodes, m.triangles[m.region == Region.FLUID], m.region[m.region == Region.FLUID],
               m.boundary_edges[keep], m.boundary_tags[keep])
    s = CoupledSpaces.__new__(CoupledSpaces)
    s.mesh = cut
    with pytest.raises(ValueError, match="interface"):
        assemble_a(s, PhysicalParams())


def test_convection_zero_beta(spaces):
    assert not assemble_b(FeFunction(spaces.u), spaces).toarray().any()


def test_convection_skew_identity(spaces):
    rng = np.random.default_rng(2)
    for _ in range(10):
        beta = random_block(spaces, "u", rng)
        v = random_block(spaces, "u", rng)
        B = assemble_b(beta, spaces)
        lhs = v.coef @ B @ v.coef
        rhs = interface_convection(beta, v)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_convection_interior_beta(spaces):
    beta = interpolate(lambda x, y: (x * (1 - x) * (y - 1) * (2 - y), np.sin(x) * (y - 1) * (2 - y)),
                       spaces.u)
    B = assemble_b(beta, spaces)
    rng = np.random.default_rng(3)
    scale = np.abs(B.data).max()
    for _ in range(10):
        v = rng.uniform(-1, 1, spaces.u.ndofs)
        assert abs(v @ B @ v) <= 1e-13 * scale * (v @ v)


def test_convection_hand_example(spaces):
    v = interpolate(lambda x, y: (0 * x, y - 2), spaces.u)
    B = assemble_b(v, spaces)
    assert v.coef @ B @ v.coef == pytest.approx(0.5, rel=1e-12)
    assert interface_convection(v, v) == pytest.approx(0.5, rel=1e-12)


def test_convection_rejects_foreign_field(spaces):
    other = CoupledSpaces(build_two_domain_mesh(2, 2))
    with pytest.raises(ValueError):
        assemble_b(FeFunction(other.u), spaces)
    with pytest.raises(ValueError):
        assemble_b(FeFunction(spaces.phi_f), spaces)


def test_divergence_examples(spaces):
    D = assemble_d(spaces, PhysicalParams())
    trans = interpolate(lambda x, y: (1 + 0 * x, 0 * x), spaces.u)
    assert np.abs(D @ trans.coef).max() < 1e-14
    stretch = interpolate(lambda x, y: (x, 0 * x), spaces.u)
    one = interpolate(lambda x, y: np.ones_like(x), spaces.p)
    assert one.coef @ D @ stretch.coef == pytest.approx(-1.0, rel=1e-13)
    D2 = assemble_d(spaces, PhysicalParams(rho=2.0))
    assert np.allclose(D2.toarray(), 2 * D.toarray(), rtol=0, atol=0)


def test_block_structure(spaces):
    sys_ = assemble_system(spaces, PhysicalParams(), SourceSpec())
    assert sys_.shape == (spaces.ndofs, spaces.ndofs)
    assert sys_.block("p", "p").nnz == 0
    up = sys_.block("u", "p").toarray()
    pu = sys_.block("p", "u").toarray()
    assert np.array_equal(up, -pu.T)


def test_rhs_examples(spaces):
    params = PhysicalParams(rho=3.0)
    assert not assemble_rhs(SourceSpec(), spaces, params).any()
    assert not assemble_rhs(None, spaces, params).any()
    b = assemble_rhs(SourceSpec(f_d=lambda x, y: np.ones_like(x)), spaces, params)
    r = spaces.ranges
    assert b[r["phi_f"]].sum() == pytest.approx(1.0, rel=1e-13)
    assert not b[r["phi_m"]].any() and not b[r["u"]].any() and not b[r["p"]].any()
    fs = SourceSpec(f_s=lambda x, y: (np.ones_like(x), 0 * x))
    b1 = assemble_rhs(fs, spaces, PhysicalParams())
    b3 = assemble_rhs(fs, spaces, params)
    assert np.allclose(b3, 3 * b1, rtol=1e-15)
    assert b1[r["u"]][:spaces.u.nscalar].sum() == pytest.approx(1.0, rel=1e-13)


def test_dirichlet_identity_without_constraints():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    sys_ = BlockSystem(A, np.array([1.0, 2.0]), {"u": slice(0, 2)}, np.zeros(2, dtype=bool),
                       np.zeros(2))
    out = apply_dirichlet(sys_)
    assert out.dirichlet_applied
    assert np.array_equal(out.matrix.toarray(), A.toarray())
    assert np.array_equal(out.rhs, sys_.rhs)


def test_dirichlet_all_constrained():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    vals = np.array([4.0, -5.0])
    sys_ = BlockSystem(A, np.array([1.0, 2.0]), {"u": slice(0, 2)}, np.ones(2, dtype=bool), vals)
    out = apply_dirichlet(sys_)
    assert np.array_equal(spla.spsolve(out.matrix.tocsc(), out.rhs), vals)


def _solve_both(raw):
    elim = apply_dirichlet(raw)
    return spla.spsolve(elim.matrix.tocsc(), elim.rhs), elim


DATA = SourceSpec(f_s=lambda x, y: (np.sin(x), y), f_d=lambda x, y: x * y,
                  u_dir=lambda x, y: (y - 1, 0 * x), phi_m_dir=lambda x, y: 1 + x,
                  phi_f_dir=lambda x, y: np.cos(y))


def test_dirichlet_matches_reduced_solve():
    sp_ = CoupledSpaces(build_two_domain_mesh(3, 3), DATA)
    raw = assemble_system(sp_, PhysicalParams(), DATA)
    x, elim = _solve_both(raw)
    c = raw.constrained
    assert np.array_equal(x[c], raw.values[c])
    A = raw.matrix.tocsr()
    f = ~c
    xf = spla.spsolve(A[f][:, f].tocsc(), raw.rhs[f] - A[f][:, c] @ raw.values[c])
    assert np.allclose(x[f], xf, rtol=0, atol=1e-12 * np.abs(xf).max())
    # constrained rows and columns become identity
    idx = np.flatnonzero(c)
    M = elim.matrix.tocsc()
    assert np.array_equal(M[:, idx].toarray(), np.eye(M.shape[0])[:, idx])
    assert np.array_equal(M.T.tocsc()[:, idx].toarray(), np.eye(M.shape[0])[:, idx])


def test_dirichlet_energy_matches_penalty():
    """The porous block is elliptic, where a large penalty is an accurate reference."""
    sp_ = CoupledSpaces(build_two_domain_mesh(3, 3), DATA)
    full = assemble_system(sp_, PhysicalParams(), DATA)
    r = slice(sp_.ranges["phi_m"].start, sp_.ranges["phi_f"].stop)
    raw = BlockSystem(full.matrix[r, r].tocsr(), full.rhs[r], {}, full.constrained[r],
                      full.values[r])
    x, _ = _solve_both(raw)
    lam = 1e10 * np.abs(raw.matrix.data).max()
    c = raw.constrained.astype(float)
    xp = spla.spsolve((raw.matrix + sp.diags(lam * c)).tocsc(), raw.rhs + lam * c * raw.values)
    A = raw.matrix
    assert x @ A @ x == pytest.approx(xp @ A @ xp, rel=1e-8)


def test_energy_identity_term_by_term(spaces):
    params = PhysicalParams(rho=1.5, nu=0.7, mu=1.1, k_m=0.8, k_f=0.6, sigma=1.3, alpha=0.9)
    rng = np.random.default_rng(5)
    v = random_block(spaces, "u", rng)
    pm = random_block(spaces, "phi_m", rng)
    pf = random_block(spaces, "phi_f", rng)
    x = spaces.join({"u": v, "phi_m": pm, "phi_f": pf})
    A = assemble_system(spaces, params, None, beta=v).matrix
    jump = FeFunction(spaces.phi_m, pm.coef - pf.coef)
    expected = (2 * params.rho * params.nu * norms(v, "Dseminorm") ** 2
                + params.k_m / params.mu * norms(pm, "H1semi") ** 2
                + params.k_f / params.mu * norms(pf, "H1semi") ** 2
                + params.sigma * params.k_m / params.mu * norms(jump, "L2") ** 2
                + params.bjs * _tangential_sq(v)
                + interface_convection(v, v))
    assert x @ A @ x == pytest.approx(expected, rel=1e-12)


def _tangential_sq(v):
    tr = v.dofmap.interface_trace()
    vv, _ = v.on_trace(tr)
    vt = np.einsum("eqa,ea->eq", vv, v.dofmap.mesh.interface.tangent)
    return float((tr.wlen * vt ** 2).sum())


def test_assembly_is_reproducible(spaces):
    rng = np.random.default_rng(6)
    beta = FeFunction(spaces.u, rng.uniform(-1, 1, spaces.u.ndofs))
    a = assemble_system(spaces, PhysicalParams(), SourceSpec(), beta=beta, newton_at=beta)
    b = assemble_system(spaces, PhysicalParams(), SourceSpec(), beta=beta, newton_at=beta)
    assert np.array_equal(a.matrix.indptr, b.matrix.indptr)
    assert np.array_equal(a.matrix.indices, b.matrix.indices)
    assert np.array_equal(a.matrix.data, b.matrix.data)


def test_matrix_market_dump(tmp_path, spaces):
    sys_ = assemble_system(spaces, PhysicalParams(), SourceSpec())
    path = tmp_path / "A.mtx"
    write_matrix_market(path, sys_)
    assert path.read_text().startswith("%%MatrixMarket matrix coordinate")
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - sys_.matrix).max() == 0.0
