"""Manufactured-solution convergence tables."""

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..assembly import CoupledSpaces, PhysicalParams
from ..femspace import norms
from ..mesh import build_two_domain_mesh
from ..solver import NonConvergenceError, solve
from .interface import CONDITIONS, interface_residuals
from .manufactured import ExactSolution, case

METRICS = ("u_H1", "u_L2", "p_L2", "phi_m_H1", "phi_f_H1")
EXPECTED_ORDERS = {"u_H1": 1.8, "u_L2": 2.8, "p_L2": 1.8, "phi_m_H1": 1.8, "phi_f_H1": 1.8}


def level_size(level):
    """Subdivisions per unit length at level l >= 1: 4 * 2^(l-1)."""
    if level < 1:
        raise ValueError(f"levels start at 1, got {level}")
    return 4 * 2 ** (level - 1)


def observed_orders(values):
    """log2(e_l / e_{l+1}); None where undefined."""
    out = [None]
    for a, b in zip(values, values[1:]):
        if a is None or b is None or not (a > 0 and b > 0) or math.isnan(a) or math.isnan(b):
            out.append(None)
        else:
            out.append(math.log2(a / b))
    return out


@dataclass
class ConvergenceTable:
    case: str
    levels: list
    h: list
    errors: dict
    interface: dict
    iterations: list
    status: list
    checks: str = "manufactured-solution convergence"
    orders: dict = field(init=False)
    interface_orders: dict = field(init=False)

    def __post_init__(self):
        self.orders = {k: observed_orders(v) for k, v in self.errors.items()}
        self.interface_orders = {k: observed_orders(v) for k, v in self.interface.items()}

    def min_order(self, metric, source="errors"):
        orders = (self.orders if source == "errors" else self.interface_orders)[metric]
        vals = [o for o in orders if o is not None]
        return min(vals) if vals else math.nan

    def max_error(self):
        return max(max(v for v in vals if v is not None) for vals in self.errors.values())

    def columns(self):
        cols = ["level", "nx", "h"]
        for m in METRICS:
            cols += [m, f"order_{m}"]
        for c in CONDITIONS:
            cols += [f"res_{c}", f"order_res_{c}"]
        return cols

    def rows(self):
        for i, lev in enumerate(self.levels):
            row = [lev, level_size(lev), self.h[i]]
            for m in METRICS:
                row += [self.errors[m][i], self.orders[m][i]]
            for c in CONDITIONS:
                row += [self.interface[c][i], self.interface_orders[c][i]]
            yield row

    def to_text(self):
        head = f"{'level':>5} {'h':>10} " + " ".join(f"{m:>10} {'rate':>5}" for m in METRICS)
        lines = [f"checks: {self.checks}", f"case: {self.case}", head]
        for i, lev in enumerate(self.levels):
            parts = [f"{lev:>5d}", f"{self.h[i]:10.3e}"]
            for m in METRICS:
                e, o = self.errors[m][i], self.orders[m][i]
                parts.append(f"{e:10.3e}" if e is not None else f"{'-':>10}")
                parts.append(f"{o:5.2f}" if o is not None else f"{'-':>5}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"


def errors_against(state, exact):
    cal = exact.callables()
    return {
        "u_H1": norms(state.u, "H1semi", *cal["u"]),
        "u_L2": norms(state.u, "L2", cal["u"][0]),
        "p_L2": norms(state.p, "L2", cal["p"][0]),
        "phi_m_H1": norms(state.phi_m, "H1semi", *cal["phi_m"]),
        "phi_f_H1": norms(state.phi_f, "H1semi", *cal["phi_f"]),
    }


def _level_result(job, lev):
    ex, src, pr, method, tol, max_iter, pattern = job
    n = level_size(lev)
    mesh = build_two_domain_mesh(n, n, pattern=pattern)
    spaces = CoupledSpaces(mesh, src)
    try:
        st, rep = solve(spaces, pr, src, method=method, tol=tol, max_iter=max_iter)
    except NonConvergenceError as exc:
        return float(mesh.h), None, None, exc.report.iterations if exc.report else 0
    return (float(mesh.h), errors_against(st, ex), interface_residuals(st, pr).values(),
            rep.iterations)


_JOB = None


def _forked_level(lev):
    return _level_result(_JOB, lev)


def _map_levels(job, levels, workers):
    global _JOB
    if workers <= 1 or len(levels) < 2:
        return [_level_result(job, lev) for lev in levels]
    # closures over sympy-generated callables do not pickle; fork inherits them instead
    _JOB = job
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(min(workers, len(levels)), mp_context=ctx) as pool:
            return list(pool.map(_forked_level, levels))
    finally:
        _JOB = None


def convergence_study(exact="trig", levels=4, params=None, method="picard", tol=1e-10,
                      max_iter=50, sources=None, pattern="right", workers=0):
    """Solve on levels 1..levels against a manufactured solution and tabulate errors.

    Parameters
    ----------
    exact : str or ExactSolution
    sources : SourceSpec, optional
        Overrides the forcing derived from ``exact`` (negative controls).
    workers : int
        Solve levels in that many forked processes; 0 or 1 runs serially.
        Levels are independent, so the table does not depend on this.
    """
    pr = params or PhysicalParams()
    ex = exact if isinstance(exact, ExactSolution) else case(exact, pr)
    src = sources or ex.sources()
    levs = list(range(1, levels + 1))
    results = _map_levels((ex, src, pr, method, tol, max_iter, pattern), levs, workers)
    errs = {m: [] for m in METRICS}
    ires = {c: [] for c in CONDITIONS}
    hs, its, status = [], [], []
    for h, e, r, it in results:
        hs.append(h)
        its.append(it)
        status.append("ok" if e is not None else "nonconverged")
        for m in METRICS:
            errs[m].append(e[m] if e is not None else None)
        for c in CONDITIONS:
            ires[c].append(r[c] if r is not None else None)
    return ConvergenceTable(ex.name, levs, hs, errs, ires, its, status)
