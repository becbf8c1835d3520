"""Fixed-point and Newton iterations over sparse direct saddle-point solves."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (BLOCKS, BlockSystem, _embed, apply_dirichlet, assemble_rhs,
                       assemble_system, convection_jacobian, convection_matrix,
                       linear_operator)
from .femspace import FeFunction

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50


class SingularSystemError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, report=None, state=None):
        super().__init__(message)
        self.report = report
        self.state = state


@dataclass
class CoupledState:
    """Global coefficient vector with per-field views."""

    spaces: object
    x: np.ndarray

    def field(self, name):
        return FeFunction(self.spaces[name], np.array(self.x[self.spaces.ranges[name]]))

    @property
    def u(self):
        return self.field("u")

    @property
    def p(self):
        return self.field("p")

    @property
    def phi_m(self):
        return self.field("phi_m")

    @property
    def phi_f(self):
        return self.field("phi_f")

    @classmethod
    def zero(cls, spaces):
        return cls(spaces, spaces.values.copy())

    @classmethod
    def random(cls, spaces, rng, scale=1.0):
        """Coefficients i.i.d. uniform on [-scale, scale] with Dirichlet values imposed."""
        x = rng.uniform(-scale, scale, spaces.ndofs)
        x[spaces.constrained] = spaces.values[spaces.constrained]
        return cls(spaces, x)

    def distance(self, other):
        """Relative Euclidean distance of the coefficient vectors."""
        ref = max(np.linalg.norm(self.x), np.linalg.norm(other.x), np.finfo(float).tiny)
        return float(np.linalg.norm(self.x - other.x) / ref)


@dataclass
class SolveReport:
    method: str
    tol: float
    iterations: int = 0
    residuals: list = field(default_factory=list)
    linear: list = field(default_factory=list)
    damped_from: int = -1
    converged: bool = False
    checks: str = "discrete Galerkin problem residual"

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else float("nan")

    def to_text(self):
        lines = [f"checks: {self.checks}",
                 f"method: {self.method}",
                 f"tolerance: {self.tol:.6e}",
                 f"iterations: {self.iterations}",
                 f"converged: {str(self.converged).lower()}",
                 f"final_residual: {self.final_residual:.6e}",
                 f"damping_started_at: {self.damped_from}",
                 "",
                 "iteration  residual        linear_rel_residual  nnz"]
        for k, r in enumerate(self.residuals):
            lin = self.linear[k] if k < len(self.linear) else {}
            lines.append(f"{k + 1:9d}  {r:.6e}  {lin.get('rel_residual', float('nan')):.6e}"
                         f"         {lin.get('nnz', 0)}")
        return "\n".join(lines) + "\n"

    def history_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual"])
        for k, r in enumerate(self.residuals):
            w.writerow([k + 1, f"{r:.12e}"])
        return buf.getvalue()


def _block_of(sys_, idx):
    for name, rng in sys_.ranges.items():
        if rng.start <= idx < rng.stop:
            return name
    return "?"


def linear_solve(sys_, stats=None):
    """Sparse LU solve of a Dirichlet-eliminated system.

    Raises
    ------
    SingularSystemError
        When a row or column is structurally empty or the factorisation hits
        an exactly zero pivot.
    """
    if not sys_.dirichlet_applied:
        raise ValueError("apply_dirichlet must be called before linear_solve")
    A = sys_.matrix.tocsc()
    b = sys_.rhs
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"system is not square: {A.shape} with rhs {b.shape}")
    empty_rows = np.flatnonzero(np.asarray(abs(A).sum(axis=1)).ravel() == 0)
    empty_cols = np.flatnonzero(np.asarray(abs(A).sum(axis=0)).ravel() == 0)
    if len(empty_rows) or len(empty_cols):
        i = int(empty_rows[0] if len(empty_rows) else empty_cols[0])
        raise SingularSystemError(f"structurally singular system: zero pivot in block "
                                  f"'{_block_of(sys_, i)}' (dof {i})")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc
    x = lu.solve(b)
    bnorm = max(np.linalg.norm(b), np.finfo(float).tiny)
    rel = np.linalg.norm(A @ x - b) / bnorm
    for _ in range(3):
        if rel <= 1e-12:
            break
        x = x + lu.solve(b - A @ x)
        rel = np.linalg.norm(A @ x - b) / bnorm
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("singular system: non-finite solution")
    if stats is not None:
        stats.append({"n": A.shape[0], "nnz": int(A.nnz), "rel_residual": float(rel)})
    if rel > 1e-10:
        raise SingularSystemError(f"linear solve residual {rel:.3e} exceeds 1e-10; "
                                  "system is numerically singular")
    return x


class _Problem:
    """Cached linear parts of the coupled problem."""

    def __init__(self, spaces, params, sources):
        self.spaces = spaces
        self.params = params
        self.sources = sources
        self.base = linear_operator(spaces, params)
        self.rhs = assemble_rhs(sources, spaces, params)
        self.free = spaces.free

    def conv(self, x):
        u = FeFunction(self.spaces.u, x[self.spaces.ranges["u"]])
        return _embed(self.spaces, {("u", "u"): convection_matrix(self.spaces.u, u)})

    def residual_vector(self, x, conv=None):
        conv = self.conv(x) if conv is None else conv
        return (self.base @ x + conv @ x - self.rhs)

    def residual(self, x, conv=None):
        r = self.residual_vector(x, conv)
        return float(np.linalg.norm(r[self.free]))

    def system(self, matrix, rhs=None, values=None):
        s = self.spaces
        return apply_dirichlet(BlockSystem(matrix.tocsr(), self.rhs if rhs is None else rhs,
                                           dict(s.ranges), s.constrained.copy(),
                                           s.values.copy() if values is None else values))


def residual(state, sources, params):
    """Euclidean norm of the nonlinear residual over unconstrained dofs."""
    return _Problem(state.spaces, params, sources).residual(state.x)


def warm_start(spaces, params, sources, stats=None, problem=None):
    """Solution of the linear problem with the convection term omitted."""
    pb = problem or _Problem(spaces, params, sources)
    return linear_solve(pb.system(pb.base), stats)


def picard_solve(spaces, params, sources, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 initial=None, damping=0.5, raise_on_fail=True):
    """Fixed-point iteration u^{k+1} solving a + b(u^k; ., .) with Dirichlet data.

    Damping with factor ``damping`` switches on after three consecutive
    residual increases. Without ``initial`` the first iterate is the warm
    start of :func:`warm_start`, which counts as iteration 1.

    Returns
    -------
    (CoupledState, SolveReport)
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    pb = _Problem(spaces, params, sources)
    rep = SolveReport("picard", tol)
    x = None if initial is None else _with_dirichlet(initial.x, spaces)
    conv = None if x is None else pb.conv(x)
    omega, increases = 1.0, 0
    while rep.iterations < max_iter:
        if x is None:
            x_new = linear_solve(pb.system(pb.base), rep.linear)
        else:
            x_new = linear_solve(pb.system(pb.base + conv), rep.linear)
            if omega != 1.0:
                x_new = x + omega * (x_new - x)
        x = x_new
        rep.iterations += 1
        conv = pb.conv(x)
        r = pb.residual(x, conv)
        if rep.residuals and r > rep.residuals[-1]:
            increases += 1
        else:
            increases = 0
        rep.residuals.append(r)
        if r <= tol:
            rep.converged = True
            break
        if not np.isfinite(r):
            break
        if increases >= 3 and omega == 1.0:
            omega = damping
            rep.damped_from = rep.iterations
    state = CoupledState(spaces, x if x is not None else spaces.values.copy())
    if not rep.converged and raise_on_fail:
        raise NonConvergenceError(f"picard iteration did not reach {tol:.1e} in {max_iter} "
                                  f"iterations (last residual {rep.final_residual:.3e})",
                                  rep, state)
    return state, rep


def newton_solve(spaces, params, sources, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 initial=None, raise_on_fail=True):
    """Newton iteration on the same discrete equations as :func:`picard_solve`."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    pb = _Problem(spaces, params, sources)
    rep = SolveReport("newton", tol)
    x = None if initial is None else _with_dirichlet(initial.x, spaces)
    zeros = np.zeros(spaces.ndofs)
    conv = None if x is None else pb.conv(x)
    while rep.iterations < max_iter:
        if x is None:
            x = linear_solve(pb.system(pb.base), rep.linear)
        else:
            F = pb.residual_vector(x, conv)
            u = FeFunction(spaces.u, x[spaces.ranges["u"]])
            J = pb.base + conv + _embed(spaces, {("u", "u"): convection_jacobian(spaces.u, u)})
            x = x + linear_solve(pb.system(J, rhs=-F, values=zeros), rep.linear)
        rep.iterations += 1
        conv = pb.conv(x)
        r = pb.residual(x, conv)
        rep.residuals.append(r)
        if r <= tol:
            rep.converged = True
            break
        if not np.isfinite(r) or r > 1e12:
            break
    state = CoupledState(spaces, x if x is not None else spaces.values.copy())
    if not rep.converged and raise_on_fail:
        raise NonConvergenceError(f"newton iteration did not reach {tol:.1e} in {max_iter} "
                                  f"iterations (last residual {rep.final_residual:.3e})",
                                  rep, state)
    return state, rep


def solve(spaces, params, sources, method="picard", **kw):
    if method == "picard":
        return picard_solve(spaces, params, sources, **kw)
    if method == "newton":
        return newton_solve(spaces, params, sources, **kw)
    raise ValueError(f"unknown nonlinear method {method!r}")


def _with_dirichlet(x, spaces):
    x = np.array(x, dtype=float)
    x[spaces.constrained] = spaces.values[spaces.constrained]
    return x


__all__ = ["BLOCKS", "CoupledState", "SolveReport", "SingularSystemError", "NonConvergenceError",
           "linear_solve", "picard_solve", "newton_solve", "residual", "solve", "warm_start",
           "assemble_system"]
