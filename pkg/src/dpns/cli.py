"""Command-line front end.

Exit status: 0 when every asserted check passes, 2 for configuration errors,
3 when a nonlinear or eigenvalue solve fails to converge, 4 when a check
fails.
"""

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .assembly import CoupledSpaces
from .auxiliary import (AuxiliarySpaces, compensation_report, inverse_inequality_probe,
                        solve_auxiliary)
from .config import ConfigError, RunConfig, load_config
from .mesh import build_two_domain_mesh
from .output import report_text, write_csv, write_state_vtk, write_text
from .solver import NonConvergenceError, residual, solve
from .verify.convergence import EXPECTED_ORDERS, METRICS, convergence_study, errors_against, \
    level_size
from .verify.energy import UnconvergedStateError, energy_audit, energy_identity
from .verify.forcing import random_forcings
from .verify.infsup import EigenNonConvergenceError, infsup_estimate
from .verify.interface import CONDITIONS
from .verify.uniqueness import estimate_trilinear_constant, uniqueness_probe

OK, CONFIG_ERROR, NONCONVERGED, CHECK_FAILED = 0, 2, 3, 4
COMMANDS = ("solve", "converge", "audit", "infsup", "probe", "aux")

EXACT_TOL = 1e-8
IDENTITY_TOL = 1e-9
SPREAD_MAX = 0.25
CONTROL_DROP_MIN = 0.5
AGREEMENT_TOL = 1e-8


class Unconverged(Exception):
    """A solve inside a command failed; nothing further is written."""


def mesh_for(cfg, level):
    n = level_size(level)
    return build_two_domain_mesh(n, n, pattern=cfg.pattern)


def _solve(cfg, mesh, sources, **kw):
    spaces = CoupledSpaces(mesh, sources)
    try:
        return solve(spaces, cfg.params, sources, method=cfg.method, tol=cfg.tol,
                     max_iter=cfg.max_iter, **kw)
    except NonConvergenceError as exc:
        raise Unconverged(str(exc)) from exc


def _is_homogeneous(src):
    return src.u_dir is None and src.phi_m_dir is None and src.phi_f_dir is None


def cmd_solve(cfg):
    mesh = mesh_for(cfg, cfg.level)
    src = cfg.sources()
    spaces = CoupledSpaces(mesh, src)
    try:
        state, rep = solve(spaces, cfg.params, src, method=cfg.method, tol=cfg.tol,
                           max_iter=cfg.max_iter)
    except NonConvergenceError as exc:
        write_text(cfg.out / "solve_report.txt", exc.report.to_text())
        write_text(cfg.out / "solve_history.csv", exc.report.history_csv())
        raise Unconverged(str(exc)) from exc
    r = residual(state, src, cfg.params)
    checks = [("fixed-point consistency (re-assembled residual <= tol)", r <= cfg.tol)]
    extra = {"level": cfg.level, "h": float(mesh.h), "retested_residual": r}
    ex = cfg.exact()
    if ex is not None:
        extra.update({f"error_{k}": v for k, v in errors_against(state, ex).items()})
    write_state_vtk(cfg.out / "solution.vtk", state)
    write_text(cfg.out / "solve_report.txt", rep.to_text() + "\n" + report_text(extra))
    write_text(cfg.out / "solve_history.csv", rep.history_csv())
    return checks


def cmd_converge(cfg):
    ex = cfg.exact()
    if ex is None:
        raise ConfigError("converge needs a manufactured case (trig, poly or exact_* fields)",
                          section="source", key="case")
    workers = 0 if cfg.serial else cfg.workers
    table = convergence_study(ex, cfg.levels, cfg.params, cfg.method, cfg.tol, cfg.max_iter,
                              sources=cfg.sources(), pattern=cfg.pattern, workers=workers)
    write_csv(cfg.out / "convergence.csv", table.columns(), table.rows())
    write_text(cfg.out / "convergence.txt", table.to_text())
    if "nonconverged" in table.status:
        raise Unconverged(f"levels {[lv for lv, s in zip(table.levels, table.status) if s != 'ok']}"
                          " did not converge")
    if table.max_error() <= EXACT_TOL:
        return [(f"exact solution reproduced (max error <= {EXACT_TOL:g})", True)]
    checks = [(f"order {m} >= {EXPECTED_ORDERS[m]}", table.min_order(m) >= EXPECTED_ORDERS[m])
              for m in METRICS]
    checks += [(f"interface residual order {c} >= 1", table.min_order(c, "interface") >= 1.0)
               for c in CONDITIONS]
    return checks


AUDIT_COLUMNS = ("forcing", "nu", "D_u_sq", "grad_phi_m_sq", "grad_phi_f_sq", "f_s_dual",
                 "f_d_dual", "lhs_consistent", "rhs_consistent", "pass_consistent",
                 "lhs_printed", "rhs_printed", "pass_printed", "identity_defect")


def cmd_audit(cfg):
    mesh = mesh_for(cfg, cfg.level)
    pr = cfg.params
    jobs = [("configured", cfg.sources())]
    jobs += [(str(i), s) for i, s in enumerate(random_forcings(cfg.seed, cfg.forcings))]
    rows, reports = [], []
    for name, src in jobs:
        state, _ = _solve(cfg, mesh, src)
        try:
            rep = energy_audit(state, src, pr, tol=max(cfg.tol, 1e-9))
        except UnconvergedStateError as exc:
            raise Unconverged(str(exc)) from exc
        ident = energy_identity(state, src, pr).relative_defect if _is_homogeneous(src) else None
        reports.append((name, rep))
        rows.append([name, pr.nu, rep.D_u_sq, rep.grad_phi_m_sq, rep.grad_phi_f_sq,
                     rep.f_s_dual, rep.f_d_dual, rep.lhs_consistent, rep.rhs_consistent,
                     rep.pass_consistent, rep.lhs_printed, rep.rhs_printed, rep.pass_printed,
                     ident])
    write_csv(cfg.out / "energy_audit.csv", AUDIT_COLUMNS, rows)
    write_text(cfg.out / "energy_report.txt", reports[0][1].to_text())
    defects = [r[-1] for r in rows if r[-1] is not None]
    checks = [("a priori bound, forms-consistent coefficients",
               all(rep.pass_consistent for _, rep in reports))]
    if defects:
        checks.append((f"energy identity at the solution (relative defect <= {IDENTITY_TOL:g})",
                       max(defects) <= IDENTITY_TOL))
    return checks


INFSUP_COLUMNS = ("level", "nx", "h", "beta", "eig_residual", "kernel_dim", "beta_control",
                  "control_eig_residual", "control_kernel_dim")


def cmd_infsup(cfg):
    rows, betas, control = [], [], []
    for lev in range(1, cfg.levels + 1):
        mesh = mesh_for(cfg, lev)
        try:
            th = infsup_estimate(mesh, cfg.params, 1, lev)
            eq = infsup_estimate(mesh, cfg.params, 2, lev)
        except EigenNonConvergenceError as exc:
            raise Unconverged(str(exc)) from exc
        betas.append(th.beta)
        control.append(eq.beta)
        rows.append([lev, level_size(lev), th.h, th.beta, th.eig_residual, th.kernel_dim,
                     eq.beta, eq.eig_residual, eq.kernel_dim])
    spread = (max(betas) - min(betas)) / max(betas)
    drop = (control[0] - control[-1]) / control[0]
    write_csv(cfg.out / "infsup.csv", INFSUP_COLUMNS, rows)
    write_text(cfg.out / "infsup_report.txt", report_text({
        "checks": th.checks, "pair": "P2-P1 (control P2-P2)", "beta": betas,
        "beta_control": control, "relative_spread": spread, "control_drop": drop}))
    return [("beta_h positive on every level", min(betas) > 0),
            (f"relative spread <= {SPREAD_MAX:g}", spread <= SPREAD_MAX),
            (f"equal-order control drops by >= {CONTROL_DROP_MIN:g}", drop >= CONTROL_DROP_MIN)]


def cmd_probe(cfg):
    mesh = mesh_for(cfg, cfg.level)
    src = cfg.sources()
    est = estimate_trilinear_constant(mesh, cfg.samples, cfg.seed)
    rep = uniqueness_probe(mesh, src, cfg.params, cfg.n_starts, cfg.seed, cfg.samples,
                           n_hat=est.value, tol=cfg.tol, max_iter=cfg.max_iter)
    write_csv(cfg.out / "trilinear_samples.csv", ("sample", "ratio", "running_max"),
              ([i, r, m] for i, (r, m) in enumerate(zip(est.ratios, est.running_max))))
    pairs = [(i, j) for i in range(cfg.n_starts - len(rep.failures))
             for j in range(i + 1, cfg.n_starts - len(rep.failures))]
    write_csv(cfg.out / "uniqueness_distances.csv", ("start_a", "start_b", "relative_distance"),
              ([a, b, d] for (a, b), d in zip(pairs, rep.distances)))
    d = rep.to_dict()
    d.pop("distances")
    d["failures"] = len(rep.failures)
    write_text(cfg.out / "uniqueness_report.txt", report_text(d))
    if rep.failures:
        raise Unconverged(f"{len(rep.failures)} of {cfg.n_starts} starts did not converge")
    checks = [("pressure bound with discrete surrogates", rep.pressure_ok)]
    if rep.indicator < 1:
        checks += [(f"starts agree within {AGREEMENT_TOL:g} (indicator < 1)",
                    rep.max_distance <= AGREEMENT_TOL),
                   ("contraction factor positive", rep.contraction > 0)]
    return checks


COMPENSATION_COLUMNS = ("sample", "coefficient", "lhs", "rhs", "defect", "identity_holds",
                        "rhs_one_sided_gradient", "rhs_one_sided_strain", "empirical_constant",
                        "h_half_D_us_proxy")


def cmd_aux(cfg):
    mesh = mesh_for(cfg, cfg.level)
    spaces = AuxiliarySpaces(mesh)
    rows, texts = [], []
    for i, src in enumerate(random_forcings(cfg.seed, cfg.aux_samples)):
        state, _ = _solve(cfg, mesh, src)
        aux = solve_auxiliary(state.u, cfg.auxiliary, cfg.params, spaces, cfg.aux_variant)
        rep = compensation_report(state.u, aux)
        texts.append(f"[sample {i}]\n" + rep.to_text())
        rows.append([i, rep.coefficient, rep.lhs, rep.rhs, rep.defect, rep.passed,
                     rep.rhs_gradient_trace, rep.rhs_strain_trace, rep.empirical_constant,
                     rep.proxy])
    c_inv = inverse_inequality_probe(mesh, 100, np.random.default_rng(cfg.seed))
    write_csv(cfg.out / "compensation.csv", COMPENSATION_COLUMNS, rows)
    head = report_text({"checks": "auxiliary compensation identity", "variant": cfg.aux_variant,
                        "c_kappa": cfg.auxiliary.c_kappa, "c_xi": cfg.auxiliary.c_xi,
                        "inverse_inequality_constant": c_inv})
    write_text(cfg.out / "compensation_report.txt", head + "".join(texts))
    return [("compensation identity on every sample", all(r[5] for r in rows))]


HANDLERS = {"solve": cmd_solve, "converge": cmd_converge, "audit": cmd_audit,
            "infsup": cmd_infsup, "probe": cmd_probe, "aux": cmd_aux}


def build_parser():
    p = argparse.ArgumentParser(prog="dpns", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--level", type=int, help="mesh level (nx = 4 * 2^(level-1))")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--serial", action="store_true", help="disable worker processes")
    return p


def configure(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.level is not None:
        if args.level < 1:
            raise ConfigError(f"--level must be at least 1, got {args.level}")
        cfg = replace(cfg, level=args.level)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.serial:
        cfg = replace(cfg, serial=True)
    return cfg


def run(command, cfg, stream=None):
    """Execute ``command`` under ``cfg``; returns the exit status."""
    stream = stream or sys.stdout
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        checks = HANDLERS[command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except Unconverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return NONCONVERGED
    status = OK
    for name, passed in checks:
        passed = bool(passed) and not (isinstance(passed, float) and math.isnan(passed))
        print(f"{'PASS' if passed else 'FAIL'}  {command}: {name}", file=stream)
        if not passed:
            status = CHECK_FAILED
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = configure(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
