"""Gauss rules on [0, 1] and symmetric rules on the reference triangle."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    dim: int
    points: np.ndarray   # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    exact_degree: int

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> float:
        """Apply the rule to ``f(*coords)`` on the reference cell."""
        vals = f(*self.points.T)
        return float(np.dot(self.weights, np.broadcast_to(vals, self.weights.shape)))


@lru_cache(maxsize=None)
def gauss_interval(npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact to degree ``2 * npoints - 1``."""
    if int(npoints) != npoints or not 1 <= npoints <= 16:
        raise ValueError(f"npoints must be in 1..16, got {npoints}")
    x, w = np.polynomial.legendre.leggauss(int(npoints))
    return QuadratureRule(1, (0.5 * (x + 1.0))[:, None], 0.5 * w, 2 * int(npoints) - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Fully symmetric positive-weight rule on the triangle (0,0), (1,0), (0,1).

    Uses the Xiao-Gimbutas node sets shipped with modepy, mapped from the
    bi-unit triangle.
    """
    if int(degree) != degree or not 1 <= degree <= 14:
        raise ValueError(f"triangle rules exist for degree 1..14, got {degree}")
    import modepy

    q = modepy.XiaoGimbutasSimplexQuadrature(int(degree), 2)
    pts = 0.5 * (q.nodes.T + 1.0)
    w = 0.25 * q.weights
    if np.any(w <= 0):
        raise ValueError(f"degree-{degree} rule has non-positive weights")
    return QuadratureRule(2, pts, w, int(q.exact_to))


def default_rule(dim: int, degree: int = 10) -> QuadratureRule:
    """Rule used for assembly: exact to ``degree`` per interval / subtriangle."""
    if dim == 1:
        return gauss_interval(max(1, (degree + 2) // 2))
    if dim == 2:
        return triangle_rule(degree)
    raise ValueError(f"unsupported dimension {dim}")


def monomial_integral_triangle(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)
