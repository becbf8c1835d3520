import math

import numpy as np
import pytest
import sympy

from dpns.assembly import CoupledSpaces, PhysicalParams, SourceSpec, load_vector, strain_matrix
from dpns.femspace import FeFunction, interpolate, norms
from dpns.mesh import build_two_domain_mesh
from dpns.solver import CoupledState, picard_solve
from dpns.verify import (EigenNonConvergenceError, UnconvergedStateError, case, convergence_study,
                         dual_norm, energy_audit, energy_identity, estimate_trilinear_constant,
                         infsup_estimate, infsup_from_blocks, interface_residuals, korn_constant,
                         level_size, polynomial_case, trig_case, uniqueness_probe)
from dpns.verify.dualnorm import riesz_space
from dpns.verify.forcing import random_forcing, random_forcings
from dpns.verify.uniqueness import TrilinearSampler, bubble_field, small_data_indicator


def mesh_at(level):
    n = level_size(level)
    return build_two_domain_mesh(n, n)


@pytest.fixture(scope="module")
def trig_solution():
    params = PhysicalParams()
    src = trig_case(params).sources()
    spaces = CoupledSpaces(mesh_at(1), src)
    state, _ = picard_solve(spaces, params, src)
    return state, src, params


# -- dual norms --------------------------------------------------------------

def test_level_size():
    assert [level_size(k) for k in (1, 2, 3, 4)] == [4, 8, 16, 32]
    with pytest.raises(ValueError):
        level_size(0)


def test_dual_norm_zero_and_scaling():
    m = mesh_at(1)
    assert dual_norm(lambda x, y: 0.0, "scalar", m) == 0.0
    assert dual_norm(lambda x, y: (0.0, 0.0), "velocity", m) == 0.0
    f = lambda x, y: np.sin(3 * x) + y * y  # noqa: E731
    a = dual_norm(f, "scalar", m)
    assert a > 0
    assert dual_norm(lambda x, y: -3 * f(x, y), "scalar", m) == pytest.approx(3 * a, rel=1e-13)
    with pytest.raises(ValueError):
        dual_norm(f, "pressure", m)


def test_dual_norm_monotone_under_refinement():
    vals = [dual_norm(lambda x, y: np.ones_like(x), "scalar", mesh_at(k)) for k in (1, 2, 3, 4)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] - vals[-2] < vals[1] - vals[0]


@pytest.mark.parametrize("space", ["velocity", "scalar"])
def test_dual_norm_is_the_discrete_supremum(space):
    m = mesh_at(1)
    f = (lambda x, y: (np.cos(2 * x) * y, x - y)) if space == "velocity" else \
        (lambda x, y: np.exp(x) * y)
    value, z = dual_norm(f, space, m, return_representer=True)
    dm = riesz_space(m, space)
    F = load_vector(dm, f)
    G = strain_matrix(dm) if space == "velocity" else None
    seminorm = (lambda c: math.sqrt(c @ G @ c)) if G is not None else \
        (lambda c: norms(FeFunction(dm, c), "H1semi"))
    rng = np.random.default_rng(8)
    for _ in range(50):
        v = rng.uniform(-1, 1, dm.ndofs)
        v[dm.constrained] = 0.0
        assert (F @ v) / seminorm(v) <= value + 1e-12
    # the representer attains it
    assert (F @ z) / seminorm(z) == pytest.approx(value, rel=1e-12)


# -- energy ------------------------------------------------------------------

def test_energy_audit_zero_data():
    spaces = CoupledSpaces(mesh_at(1))
    rep = energy_audit(CoupledState.zero(spaces), SourceSpec(), PhysicalParams())
    assert rep.lhs_consistent == 0.0 and rep.rhs_consistent == 0.0
    assert rep.passed and rep.pass_printed
    assert rep.to_text().startswith("D_u_sq: ")
    assert "checks: " in rep.to_text()


def test_energy_rhs_quadruples_with_doubled_force():
    m = mesh_at(1)
    params = PhysicalParams(nu=0.5)
    src = random_forcing(np.random.default_rng(4))
    only_fs = SourceSpec(f_s=src.f_s)
    reports = []
    for c in (1.0, 2.0):
        data = only_fs.scaled(c_s=c)
        state, _ = picard_solve(CoupledSpaces(m, data), params, data, tol=1e-12)
        reports.append(energy_audit(state, data, params))
    assert reports[1].f_s_dual == pytest.approx(2 * reports[0].f_s_dual, rel=1e-14)
    assert reports[1].rhs_consistent == pytest.approx(4 * reports[0].rhs_consistent, rel=1e-14)
    assert all(r.passed for r in reports)


def test_energy_audit_refuses_unconverged():
    src = random_forcing(np.random.default_rng(5))
    spaces = CoupledSpaces(mesh_at(1), src)
    with pytest.raises(UnconvergedStateError, match="residual"):
        energy_audit(CoupledState.zero(spaces), src, PhysicalParams())


def test_energy_identity_at_solution():
    params = PhysicalParams(nu=0.1)
    for src in random_forcings(17, 3):
        state, _ = picard_solve(CoupledSpaces(mesh_at(1), src), params, src, tol=1e-12)
        assert energy_identity(state, src, params).relative_defect <= 1e-9
        assert energy_audit(state, src, params).passed


def test_random_forcings_reproducible():
    a = random_forcings(3, 2)
    b = random_forcings(3, 2)
    x, y = np.array([0.2, 0.7]), np.array([0.4, 1.5])
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.f_d(x, y), fb.f_d(x, y))
        assert np.array_equal(np.array(fa.f_s(x, y)), np.array(fb.f_s(x, y)))


# -- inf-sup -----------------------------------------------------------------

def test_infsup_one_pressure_dof():
    rng = np.random.default_rng(9)
    n = 6
    L = rng.uniform(-1, 1, (n, n))
    Mu = L @ L.T + n * np.eye(n)
    b = rng.uniform(-1, 1, (1, n))
    Mp = np.array([[0.7]])
    beta, res, _, kernel = infsup_from_blocks(b, Mu, Mp)
    expected = math.sqrt((b @ np.linalg.solve(Mu, b.T)).item() / 0.7)
    assert beta == pytest.approx(expected, rel=1e-12)
    assert res <= 1e-8 and kernel == 0


def test_infsup_zero_operator_raises():
    with pytest.raises(EigenNonConvergenceError):
        infsup_from_blocks(np.zeros((2, 3)), np.eye(3), np.eye(2))


def test_infsup_stable_pair_and_negative_control():
    params = PhysicalParams()
    th = [infsup_estimate(mesh_at(k), params, level=k) for k in (1, 2, 3)]
    betas = [r.beta for r in th]
    assert min(betas) > 0
    assert (max(betas) - min(betas)) <= 0.25 * max(betas)
    assert all(r.eig_residual <= 1e-8 for r in th)
    eq = [infsup_estimate(mesh_at(k), params, pressure_degree=2, level=k).beta for k in (1, 2, 3)]
    assert eq[0] > eq[1] > eq[2]
    assert eq[2] < 0.5 * betas[2]


# -- trilinear constant and uniqueness --------------------------------------

@pytest.fixture(scope="module")
def sampler():
    return TrilinearSampler(mesh_at(1))


def test_trilinear_sample_count(sampler):
    with pytest.raises(ValueError):
        estimate_trilinear_constant(sampler.mesh, samples=50, sampler=sampler)


def test_trilinear_running_max(sampler):
    est = estimate_trilinear_constant(sampler.mesh, 150, seed=2, sampler=sampler)
    assert est.samples == 150 and len(est.ratios) == 150
    assert np.all(np.diff(est.running_max) >= 0)
    short = estimate_trilinear_constant(sampler.mesh, 100, seed=2, sampler=sampler)
    assert np.array_equal(short.ratios, est.ratios[:100])
    assert est.value >= short.value
    # the bubble triple is sample 0
    assert est.value >= est.ratios[0] > 0


def test_trilinear_bounds_explicit_triples(sampler):
    est = estimate_trilinear_constant(sampler.mesh, 100, seed=0, sampler=sampler)
    rng = np.random.default_rng(12)
    zero = FeFunction(sampler.dm)
    assert sampler.ratio(zero, zero) == 0.0
    for _ in range(5):
        v, w, z = (sampler.field_from(rng.uniform(-1, 1, sampler.n_coef)) for _ in range(3))
        # an explicit z never beats the exact supremum over z
        assert sampler.ratio(v, w, z) <= sampler.ratio(v, w) * (1 + 1e-12)
    bub = interpolate(bubble_field, sampler.dm)
    assert est.value >= sampler.ratio(bub, bub, bub) > 0
    assert est.ratios[0] == sampler.ratio(bub, bub)


def test_trilinear_stable_across_levels():
    vals = [estimate_trilinear_constant(mesh_at(k), 100, seed=0).value for k in (1, 2)]
    assert abs(vals[1] - vals[0]) <= 0.15 * vals[0]


def test_korn_constant_stable():
    vals = [korn_constant(mesh_at(k), 50, seed=0) for k in (1, 2)]
    assert all(v >= 1.0 for v in vals)
    assert abs(vals[1] - vals[0]) <= 0.2 * vals[0]


def test_uniqueness_zero_data():
    rep = uniqueness_probe(mesh_at(1), SourceSpec(), PhysicalParams(), n_starts=3, seed=1,
                           n_hat=0.5, beta_h=0.3)
    assert rep.indicator == 0.0
    assert rep.max_distance == 0.0 and not rep.failures
    assert rep.pressure_ok
    assert "states" not in rep.to_dict()
    with pytest.raises(ValueError):
        uniqueness_probe(mesh_at(1), SourceSpec(), PhysicalParams(), n_starts=1)


def test_indicator_linear_in_force():
    params = PhysicalParams(rho=1.3, nu=0.4)
    a = small_data_indicator(0.8, 0.25, 0.0, params)
    assert small_data_indicator(0.8, 0.5, 0.0, params) == pytest.approx(2 * a, rel=1e-15)
    assert a == pytest.approx(0.8 * 0.25 / (1.3 * 0.4 ** 2), rel=1e-15)


def test_uniqueness_small_data_agreement():
    src = random_forcing(np.random.default_rng(21), amplitude=0.5)
    src = SourceSpec(f_s=src.f_s, f_d=src.f_d)
    rep = uniqueness_probe(mesh_at(1), src, PhysicalParams(), n_starts=3, seed=4)
    assert rep.indicator < 1
    assert rep.max_distance <= 1e-8
    assert rep.contraction > 0
    assert rep.pressure_ok


# -- interface residuals -----------------------------------------------------

def test_interface_residuals_zero_state():
    spaces = CoupledSpaces(mesh_at(1))
    res = interface_residuals(CoupledState.zero(spaces), PhysicalParams())
    assert all(v == 0.0 for v in res.values().values())


def test_mass_residual_ignores_matrix_pressure(trig_solution):
    state, _, params = trig_solution
    base = interface_residuals(state, params)
    x = state.x.copy()
    x[state.spaces.ranges["phi_m"]] += 3.7
    shifted = interface_residuals(CoupledState(state.spaces, x), params)
    assert shifted.mass == base.mass
    assert shifted.no_exchange == pytest.approx(base.no_exchange, rel=1e-10, abs=1e-14)


# -- manufactured solutions and convergence ---------------------------------

@pytest.mark.parametrize("name", ["trig", "poly"])
@pytest.mark.parametrize("params", [PhysicalParams(),
                                    PhysicalParams(rho=2.0, nu=0.3, mu=0.7, k_m=0.5, k_f=1.7,
                                                   sigma=0.4, alpha=0.6),
                                    PhysicalParams(alpha=0.0)])
def test_manufactured_interface_conditions_exact(name, params):
    mism = case(name, params).interface_mismatch()
    assert set(mism) == {"no_exchange", "mass", "normal_force", "bjs"}
    for expr in mism.values():
        rest = sympy.nsimplify(sympy.simplify(expr), tolerance=1e-13, rational=True)
        assert rest == 0, expr


def test_unknown_case():
    with pytest.raises(ValueError, match="trig"):
        case("bessel")


def test_polynomial_case_exact():
    table = convergence_study(polynomial_case(), levels=2, tol=1e-12)
    assert table.max_error() <= 1e-8
    assert table.status == ["ok", "ok"]


@pytest.fixture(scope="module")
def trig_table():
    return convergence_study("trig", levels=3)


def test_trig_rates(trig_table):
    assert trig_table.min_order("u_H1") >= 1.8
    assert trig_table.min_order("u_L2") >= 2.5
    for c in ("no_exchange", "mass", "normal_force", "bjs"):
        assert trig_table.min_order(c, source="interface") >= 1.0
    rows = list(trig_table.rows())
    assert len(rows) == 3 and len(rows[0]) == len(trig_table.columns())
    assert trig_table.to_text().startswith("checks: ")


def test_wrong_forcing_stagnates():
    ex = trig_case()
    bad = ex.sources().scaled(c_s=1.5)
    table = convergence_study(ex, levels=3, sources=bad)
    assert table.min_order("u_H1") < 0.5


def test_nonconverged_level_is_a_gap():
    table = convergence_study("trig", levels=2, max_iter=1)
    assert table.status == ["nonconverged", "nonconverged"]
    assert table.errors["u_H1"] == [None, None]
    assert table.orders["u_H1"] == [None, None]
    assert math.isnan(table.min_order("u_H1"))
    assert " - " in table.to_text() or "-\n" in table.to_text()


def test_parallel_levels_match_serial():
    a = convergence_study("trig", levels=2, workers=0)
    b = convergence_study("trig", levels=2, workers=2)
    assert a.errors == b.errors and a.interface == b.interface and a.h == b.h
