"""Symbolic manufactured solutions and their forcing terms.

Exact fields are sympy expressions in ``x, y``. Forcing is obtained by
substituting them into the strong equations that the weak form encodes:

* f_s = rho^{-1} (u.grad) u + grad p - 2 nu div D(u)   (the convection term
  carries no density factor in the variational problem, the load does)
* f_d = -(k_f/mu) lap phi_f + (sigma k_m/mu)(phi_f - phi_m)
* f_m = -(k_m/mu) lap phi_m + (sigma k_m/mu)(phi_m - phi_f)

Both built-in cases satisfy the four interface conditions exactly on the
default geometry, so no interface data has to be added.
"""

from dataclasses import dataclass

import numpy as np
import sympy as s

from ..assembly import PhysicalParams, SourceSpec

X, Y = s.symbols("x y", real=True)


def _vec_callable(exprs):
    fs = [s.lambdify((X, Y), e, "numpy") for e in exprs]

    def f(x, y):
        x = np.asarray(x, dtype=float)
        return tuple(np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape) for g in fs)
    return f


def _scalar_callable(expr):
    g = s.lambdify((X, Y), expr, "numpy")

    def f(x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape)
    return f


def _grad_callable(exprs):
    """Callable returning gradients of shape (..., len(exprs), 2)."""
    comps = [[s.diff(e, X), s.diff(e, Y)] for e in exprs]
    fs = [[s.lambdify((X, Y), c, "numpy") for c in row] for row in comps]

    def f(x, y):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (len(exprs), 2))
        for a, row in enumerate(fs):
            for b, g in enumerate(row):
                out[..., a, b] = np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape)
        return out
    return f


@dataclass
class ExactSolution:
    """Symbolic exact fields with derived forcing, for given parameters."""

    name: str
    u: tuple
    p: object
    phi_m: object
    phi_f: object
    params: PhysicalParams

    def forcing(self):
        pr = self.params
        u1, u2 = self.u
        rho, nu, mu = pr.rho, pr.nu, pr.mu
        D = [[s.diff(u1, X), (s.diff(u1, Y) + s.diff(u2, X)) / 2],
             [(s.diff(u1, Y) + s.diff(u2, X)) / 2, s.diff(u2, Y)]]
        conv = [u1 * s.diff(c, X) + u2 * s.diff(c, Y) for c in (u1, u2)]
        divD = [s.diff(D[i][0], X) + s.diff(D[i][1], Y) for i in range(2)]
        grad_p = [s.diff(self.p, X), s.diff(self.p, Y)]
        f_s = [s.simplify(conv[i] / rho + grad_p[i] - 2 * nu * divD[i]) for i in range(2)]
        ex = pr.sigma * pr.k_m / mu
        lap = lambda e: s.diff(e, X, 2) + s.diff(e, Y, 2)  # noqa: E731
        f_d = s.simplify(-(pr.k_f / mu) * lap(self.phi_f) + ex * (self.phi_f - self.phi_m))
        f_m = s.simplify(-(pr.k_m / mu) * lap(self.phi_m) + ex * (self.phi_m - self.phi_f))
        return f_s, f_d, f_m

    def sources(self):
        f_s, f_d, f_m = self.forcing()
        return SourceSpec(f_s=_vec_callable(f_s), f_d=_scalar_callable(f_d),
                          f_m=_scalar_callable(f_m), u_dir=_vec_callable(self.u),
                          phi_m_dir=_scalar_callable(self.phi_m),
                          phi_f_dir=_scalar_callable(self.phi_f))

    def callables(self):
        """Pointwise values and gradients for error norms, keyed by field."""
        return {
            "u": (_vec_callable(self.u), _grad_callable(self.u)),
            "p": (_scalar_callable(self.p), _grad_callable([self.p])),
            "phi_m": (_scalar_callable(self.phi_m), _grad_callable([self.phi_m])),
            "phi_f": (_scalar_callable(self.phi_f), _grad_callable([self.phi_f])),
        }

    def interface_mismatch(self, y_gamma=1):
        """Symbolic residuals of the four interface conditions on y = y_gamma.

        With n_s = (0, -1), n_d = (0, 1) and tau = (1, 0).
        """
        pr = self.params
        u1, u2 = self.u
        at = lambda e: s.simplify(e.subs(Y, y_gamma))  # noqa: E731
        a = pr.alpha / np.sqrt(pr.k_f)
        return {
            "no_exchange": at((pr.k_m / pr.mu) * s.diff(self.phi_m, Y)),
            "mass": at(-u2 - (pr.k_f / pr.mu) * s.diff(self.phi_f, Y)),
            "normal_force": at(self.p - 2 * pr.nu * s.diff(u2, Y) - self.phi_f / pr.rho),
            "bjs": at(pr.nu * (s.diff(u1, Y) + s.diff(u2, X)) - pr.nu * a * u1),
        }


def trig_case(params=None):
    """Smooth trigonometric fields satisfying all interface conditions exactly.

    The velocity comes from the stream function sin(pi x) g(y) with
    g(y) = cos(w(y-1)) + c sin(w(y-1)); c is fixed by the slip law.
    """
    pr = params or PhysicalParams()
    pi = s.pi
    a = pr.alpha / np.sqrt(pr.k_f)
    if a > 0:
        w = pi / 2
        c = (pi ** 2 - w ** 2) / (s.Float(a) * w)
    else:
        w, c = pi, s.Integer(0)
    t = Y - 1
    g = s.cos(w * t) + c * s.sin(w * t)
    stream = s.sin(pi * X) * g
    u = (s.diff(stream, Y), -s.diff(stream, X))
    mu_kf = s.Float(pr.mu / pr.k_f)
    phi_f = s.cos(pi * X) * (-mu_kf * s.sin(pi * Y) + s.cos(pi * Y))
    phi_m = s.cos(pi * X) * s.cos(pi * Y)
    p0 = -1 / s.Float(pr.rho) - 2 * s.Float(pr.nu) * pi * c * w
    p = p0 * s.cos(pi * X) * s.cos(pi * t) + X * s.sin(pi * t) / 2
    return ExactSolution("trig", u, p, phi_m, phi_f, pr)


def polynomial_case(params=None):
    """Quadratic velocity, linear pressure and quadratic porous pressures."""
    pr = params or PhysicalParams()
    a = s.Float(pr.alpha / np.sqrt(pr.k_f))
    A, C, D, E, F, G, Q = (s.Rational(v) for v in ("1/2", "1/3", "1/5", "1/4", "-1/3", "1/2",
                                                  "1/7"))
    B = a * A - C
    t = Y - 1
    u = (A + B * t + 3 * Q * t ** 2, C * X + D)
    phi_f = -s.Float(pr.mu / pr.k_f) * (C * X + D) * t + E * X + F
    p = (E * X + F) / s.Float(pr.rho) + G * t
    phi_m = X + X ** 2 + t ** 2 + 1
    return ExactSolution("poly", u, p, phi_m, phi_f, pr)


CASES = {"trig": trig_case, "poly": polynomial_case}


def case(name, params=None):
    try:
        return CASES[name](params)
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}; choose from {sorted(CASES)}") \
            from None
