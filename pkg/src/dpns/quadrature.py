"""Reference-triangle quadrature and Lagrange basis functions.

The reference triangle has vertices (0, 0), (1, 0), (0, 1). Local P2 nodes
are the three vertices followed by the midpoints of the local edges
(0, 1), (1, 2) and (2, 0), in that order.
"""

from dataclasses import dataclass

import numpy as np

LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on a reference cell.

    Attributes
    ----------
    points : ndarray
        Reference coordinates, shape (nq, dim).
    weights : ndarray
        Weights summing to the reference measure.
    degree : int
        Polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def barycentric(self):
        x, y = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - x - y, x, y])


def triangle_rule():
    """7-point rule exact for polynomials of degree 5 on the reference triangle."""
    s15 = np.sqrt(15.0)
    a = (6.0 - s15) / 21.0
    b = (6.0 + s15) / 21.0
    wa = (155.0 - s15) / 2400.0
    wb = (155.0 + s15) / 2400.0
    points = np.array([
        [1.0 / 3.0, 1.0 / 3.0],
        [a, a], [1.0 - 2.0 * a, a], [a, 1.0 - 2.0 * a],
        [b, b], [1.0 - 2.0 * b, b], [b, 1.0 - 2.0 * b],
    ])
    weights = np.array([9.0 / 80.0, wa, wa, wa, wb, wb, wb])
    return QuadratureRule(points, weights, 5)


def edge_rule(npoints=4):
    """Gauss-Legendre rule on [0, 1], exact to degree 2*npoints - 1."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return QuadratureRule(0.5 * (x + 1.0)[:, None], 0.5 * w, 2 * npoints - 1)


def edge_to_reference(local_edge, s):
    """Map parameters s in [0, 1] along a local edge to reference coordinates."""
    i, j = LOCAL_EDGES[local_edge]
    s = np.asarray(s, dtype=float).reshape(-1, 1)
    return (1.0 - s) * REF_VERTICES[i] + s * REF_VERTICES[j]


def lagrange_basis(degree, points):
    """Values and reference gradients of the P1 or P2 Lagrange basis.

    Parameters
    ----------
    degree : int
        1 or 2.
    points : array_like
        Reference points, shape (nq, 2).

    Returns
    -------
    values : ndarray, shape (nloc, nq)
    grads : ndarray, shape (nloc, nq, 2)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    lam = np.array([1.0 - x - y, x, y])
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = pts.shape[0]
    if degree == 1:
        values = lam
        grads = np.broadcast_to(dlam[:, None, :], (3, nq, 2)).copy()
        return values, grads
    if degree != 2:
        raise ValueError(f"unsupported Lagrange degree {degree}")
    values = np.empty((6, nq))
    grads = np.empty((6, nq, 2))
    for i in range(3):
        values[i] = lam[i] * (2.0 * lam[i] - 1.0)
        grads[i] = (4.0 * lam[i] - 1.0)[:, None] * dlam[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        values[3 + k] = 4.0 * lam[i] * lam[j]
        grads[3 + k] = 4.0 * (lam[j][:, None] * dlam[i] + lam[i][:, None] * dlam[j])
    return values, grads


def local_dof_count(degree):
    return {1: 3, 2: 6}[degree]
