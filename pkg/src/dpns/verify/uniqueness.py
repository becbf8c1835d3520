"""Trilinear-form constant, small-data indicator and multi-start uniqueness probe."""

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse.linalg as spla

from ..assembly import CoupledSpaces, strain_matrix
from ..femspace import DofMap, ElementSpec, FeFunction, interpolate, norms
from ..solver import CoupledState, NonConvergenceError, picard_solve
from .dualnorm import dual_norm
from .infsup import infsup_estimate

MIN_SAMPLES = 100
_KX = (1, 2, 3)
_JY = (0, 1, 2)


def smooth_modes():
    """Pointwise modes sin(k pi x) (2 - y) (y - 1)^j vanishing on Gamma_s."""
    def mode(k, j):
        return lambda x, y: np.sin(k * np.pi * x) * (2.0 - y) * (y - 1.0) ** j
    return [mode(k, j) for k in _KX for j in _JY]


def bubble_field(x, y):
    """(sin(pi x) sin(pi y), 0): a hand-picked sample vanishing on the whole of the fluid boundary."""
    return np.sin(np.pi * x) * np.sin(np.pi * y), np.zeros_like(x)


@dataclass
class TrilinearEstimate:
    value: float
    samples: int
    argmax: int
    seed: int
    ratios: np.ndarray = field(repr=False)
    maximiser: tuple = field(repr=False, default=())
    checks: str = "trilinear form bound"

    @property
    def running_max(self):
        return np.maximum.accumulate(self.ratios)


class TrilinearSampler:
    """Evaluate sup_z |((v.grad)w, z)| / (||D v|| ||D w|| ||D z||) over X_s,h.

    The supremum over z is exact: it is the discrete dual norm of the
    functional z -> ((v.grad)w, z) in the D-seminorm.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.dm = DofMap(mesh, ElementSpec(2, 2), "Fluid", ["GammaS"])
        free = self.dm.free
        self.free = free
        G = strain_matrix(self.dm).tocsc()[free][:, free]
        self.lu = spla.splu(G.tocsc())
        scalar = DofMap(mesh, ElementSpec(2, 1), "Fluid")
        modes = [interpolate(m, scalar).coef for m in smooth_modes()]
        self.scalar_modes = np.array(modes)

    def field_from(self, coef):
        """Vector field from 2 * n_modes mode coefficients."""
        c = np.asarray(coef, dtype=float).reshape(2, -1)
        x = np.concatenate([c[a] @ self.scalar_modes for a in range(2)])
        x[self.dm.constrained] = 0.0
        return FeFunction(self.dm, x)

    def ratio(self, v, w, z=None):
        geo = self.dm.geometry
        vv, _ = v.at_quadrature()
        _, wg = w.at_quadrature()
        conv = np.einsum("cqb,cqab->cqa", vv, wg)
        dv, dw = norms(v, "Dseminorm"), norms(w, "Dseminorm")
        if dv == 0 or dw == 0:
            return 0.0
        if z is not None:
            zv, _ = z.at_quadrature()
            dz = norms(z, "Dseminorm")
            if dz == 0:
                return 0.0
            return abs(float((geo.wdet[..., None] * conv * zv).sum())) / (dv * dw * dz)
        F = np.zeros(self.dm.ndofs)
        for a in range(2):
            loc = np.einsum("cq,iq,cq->ci", geo.wdet, geo.values, conv[..., a])
            np.add.at(F, self.dm.global_cell_dofs(a).ravel(), loc.ravel())
        Ff = F[self.free]
        sup = math.sqrt(max(float(Ff @ self.lu.solve(Ff)), 0.0))
        return sup / (dv * dw)

    @property
    def n_coef(self):
        return 2 * self.scalar_modes.shape[0]


def estimate_trilinear_constant(mesh, samples=MIN_SAMPLES, seed=0, sampler=None):
    """Running maximum of the trilinear ratio over sampled (v, w) pairs.

    Sample 0 is v = w = interpolant of the sine bubble; the rest draw mode
    coefficients i.i.d. uniform on [-1, 1] from ``default_rng(seed)``.
    The result is nondecreasing in ``samples`` for a fixed seed.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"at least {MIN_SAMPLES} samples are required, got {samples}")
    smp = sampler or TrilinearSampler(mesh)
    rng = np.random.default_rng(seed)
    bub = interpolate(bubble_field, smp.dm)
    ratios = [smp.ratio(bub, bub)]
    pairs = [("bubble", "bubble")]
    for _ in range(samples - 1):
        cv = rng.uniform(-1.0, 1.0, smp.n_coef)
        cw = rng.uniform(-1.0, 1.0, smp.n_coef)
        ratios.append(smp.ratio(smp.field_from(cv), smp.field_from(cw)))
        pairs.append((cv, cw))
    ratios = np.array(ratios)
    k = int(np.argmax(ratios))
    return TrilinearEstimate(float(ratios[k]), samples, k, seed, ratios, pairs[k])


def small_data_indicator(n_hat, fs, fd, params):
    """N (rho^-1 nu^-2 ||f_s|| + rho^-3/2 nu^-3/2 mu^1/2 sigma^-1/2 k_f^-1/2 ||f_d||)."""
    pr = params
    t1 = fs / (pr.rho * pr.nu ** 2)
    if fd == 0:
        t2 = 0.0
    elif pr.sigma == 0:
        t2 = math.inf
    else:
        t2 = (pr.rho ** -1.5 * pr.nu ** -1.5 * pr.mu ** 0.5 * pr.sigma ** -0.5
              * pr.k_f ** -0.5 * fd)
    return n_hat * (t1 + t2)


def data_constant(fs, fd, params, printed=False):
    """C with C^2 = rho/nu ||f_s||^2 + mu/k_f ||f_d||^2 (printed: mu/(sigma k_f))."""
    pr = params
    denom = pr.sigma * pr.k_f if printed else pr.k_f
    if fd and denom == 0:
        return math.inf
    second = pr.mu / denom * fd ** 2 if fd else 0.0
    return math.sqrt(pr.rho / pr.nu * fs ** 2 + second)


def pressure_bound(beta_h, n_hat, c, fs, fd, params):
    pr = params
    return (2 * math.sqrt(pr.rho * pr.nu) * c + n_hat * c ** 2 / (pr.rho * pr.nu)
            + pr.rho * fs + fd) / beta_h


@dataclass
class UniquenessReport:
    n_hat: float
    indicator: float
    f_s_dual: float
    f_d_dual: float
    distances: list
    max_distance: float
    failures: list
    contraction: float
    pressure_norm: float
    pressure_bound: float
    pressure_bound_printed: float
    beta_h: float
    seed: int
    checks: str = "small-data uniqueness condition and pressure estimate"
    states: list = field(default_factory=list, repr=False)

    @property
    def pressure_ok(self):
        return self.pressure_norm <= self.pressure_bound

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "states"}
        d["pressure_ok"] = self.pressure_ok
        return d


def uniqueness_probe(mesh, sources, params, n_starts=5, seed=0, samples=MIN_SAMPLES,
                     n_hat=None, beta_h=None, tol=1e-12, max_iter=50, scale=1.0):
    """Evidence for uniqueness: indicator value and agreement of random-start Picard solves.

    Nonconverged starts are recorded in ``failures`` rather than raised.
    """
    if n_starts < 2:
        raise ValueError("n_starts must be at least 2")
    pr = params
    rng = np.random.default_rng(seed)
    if n_hat is None:
        n_hat = estimate_trilinear_constant(mesh, samples, seed).value
    if beta_h is None:
        beta_h = infsup_estimate(mesh, pr).beta
    fs = dual_norm(sources.f_s, "velocity", mesh) if sources.f_s is not None else 0.0
    fd = dual_norm(sources.f_d, "scalar", mesh) if sources.f_d is not None else 0.0
    indicator = small_data_indicator(n_hat, fs, fd, pr)

    spaces = CoupledSpaces(mesh, sources)
    states, failures = [], []
    for k in range(n_starts):
        init = CoupledState.random(spaces, rng, scale)
        try:
            st, _ = picard_solve(spaces, pr, sources, tol=tol, max_iter=max_iter, initial=init)
            states.append(st)
        except NonConvergenceError as exc:
            failures.append({"start": k, "error": str(exc)})
    dists = [a.distance(b) for a, b in combinations(states, 2)]
    if states:
        du = norms(states[0].u, "Dseminorm")
        contraction = 2 * pr.rho * pr.nu - n_hat * 2 * du
        pnorm = norms(states[0].p, "L2")
    else:
        contraction, pnorm = math.nan, math.nan
    c = data_constant(fs, fd, pr)
    cp = data_constant(fs, fd, pr, printed=True)
    return UniquenessReport(n_hat, indicator, fs, fd, dists, max(dists, default=math.nan),
                            failures, contraction, pnorm,
                            pressure_bound(beta_h, n_hat, c, fs, fd, pr),
                            pressure_bound(beta_h, n_hat, cp, fs, fd, pr), beta_h, seed,
                            states=states)


def korn_constant(mesh, samples=100, seed=0):
    """max |v|_1 / ||D v|| over random X_s,h fields (nodal coefficients uniform on [-1, 1])."""
    dm = DofMap(mesh, ElementSpec(2, 2), "Fluid", ["GammaS"])
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        x = rng.uniform(-1.0, 1.0, dm.ndofs)
        x[dm.constrained] = 0.0
        f = FeFunction(dm, x)
        best = max(best, norms(f, "H1semi") / norms(f, "Dseminorm"))
    return best


__all__ = ["TrilinearSampler", "TrilinearEstimate", "UniquenessReport", "bubble_field",
           "data_constant", "estimate_trilinear_constant", "korn_constant", "pressure_bound",
           "small_data_indicator", "smooth_modes", "uniqueness_probe"]
