"""Seeded random polynomial forcings with homogeneous boundary data."""

import numpy as np

from ..assembly import SourceSpec

DEGREE = 2
EXPONENTS = [(a, b) for a in range(DEGREE + 1) for b in range(DEGREE + 1 - a)]


def _polynomial(c):
    """sum_i c[i] x^a_i y^b_i over EXPONENTS."""
    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return sum(ci * x ** a * y ** b for ci, (a, b) in zip(c, EXPONENTS))
    return f


def random_forcing(rng, amplitude=1.0):
    """f_s and f_d with total degree <= DEGREE and coefficients uniform on [-amplitude, amplitude].

    Coefficients are drawn in a fixed order (f_s1, f_s2, f_d), so the
    generator state determines the forcing completely.
    """
    c = rng.uniform(-amplitude, amplitude, (3, len(EXPONENTS)))
    fs1, fs2, fd = (_polynomial(ci) for ci in c)

    def f_s(x, y):
        return fs1(x, y), fs2(x, y)
    return SourceSpec(f_s=f_s, f_d=fd)


def random_forcings(seed, count, amplitude=1.0):
    rng = np.random.default_rng(seed)
    return [random_forcing(rng, amplitude) for _ in range(count)]
