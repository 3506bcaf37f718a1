"""Small expression language for initial data, forcing and stream functions.

Expressions are strings in the variables ``x``, ``y``, ``t`` using ``sin``,
``cos``, ``exp``, ``pow``, ``sqrt`` and the constant ``pi``.  They are parsed
with sympy, so derivatives are exact.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

X, Y, T = sympy.symbols("x y t", real=True)
_ALLOWED_FUNCS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp,
                  "pow": sympy.Pow, "sqrt": sympy.sqrt}
_NAMESPACE = {"x": X, "y": Y, "t": T, "pi": sympy.pi, **_ALLOWED_FUNCS}


class ExpressionError(ValueError):
    pass


def parse(text: str) -> sympy.Expr:
    if not isinstance(text, str):
        return sympy.sympify(text)
    for ch in ("__", "lambda", "import", ";"):
        if ch in text:
            raise ExpressionError(f"forbidden token {ch!r} in expression {text!r}")
    try:
        e = parse_expr(text.replace("^", "**"), local_dict=dict(_NAMESPACE),
                       global_dict={"Integer": sympy.Integer, "Float": sympy.Float,
                                    "Rational": sympy.Rational, "Symbol": sympy.Symbol},
                       transformations=standard_transformations, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of exception types
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    extra = e.free_symbols - {X, Y, T}
    if extra:
        raise ExpressionError(f"unknown names {sorted(map(str, extra))} in {text!r}")
    bad = {f.func.__name__ for f in e.atoms(sympy.Function)} - {"sin", "cos", "exp"}
    if bad:
        raise ExpressionError(f"unsupported functions {sorted(bad)} in {text!r}")
    if e.has(sympy.zoo, sympy.oo, -sympy.oo, sympy.nan):
        raise ExpressionError(f"expression {text!r} is not finite")
    return e


def _lambdify(e: sympy.Expr):
    f = sympy.lambdify((X, Y, T), e, modules="numpy")

    def call(x, y, t):
        return np.broadcast_to(np.asarray(f(x, y, t), dtype=float), np.broadcast(x, y).shape)

    return call


class VectorExpression:
    """``m`` scalar expressions with exact spatial derivatives.

    ``value(points, t)`` returns (n, m); ``gradient`` (n, m, dim);
    ``laplacian`` (n, m); ``time_derivative`` (n, m).
    """

    def __init__(self, components, dim: int = 2):
        if isinstance(components, (str, sympy.Expr, int, float)):
            components = [components]
        self.texts = [str(c) for c in components]
        self.exprs = [parse(c) if isinstance(c, str) else sympy.sympify(c) for c in components]
        self.dim = dim
        if dim == 1 and any(Y in e.free_symbols for e in self.exprs):
            raise ExpressionError("1D expressions may not depend on y")

    @property
    def m(self) -> int:
        return len(self.exprs)

    @cached_property
    def _vars(self):
        return [X, Y][: self.dim]

    @cached_property
    def _f(self):
        return [_lambdify(e) for e in self.exprs]

    @cached_property
    def _df(self):
        return [[_lambdify(sympy.diff(e, v)) for v in self._vars] for e in self.exprs]

    @cached_property
    def _hf(self):
        return [[[_lambdify(sympy.diff(e, a, b)) for b in self._vars] for a in self._vars]
                for e in self.exprs]

    @cached_property
    def _lapf(self):
        return [_lambdify(laplacian(e, self.dim)) for e in self.exprs]

    @cached_property
    def _dtf(self):
        return [_lambdify(sympy.diff(e, T)) for e in self.exprs]

    def _xy(self, points):
        points = np.asarray(points, dtype=float)
        x = points[..., 0]
        y = points[..., 1] if self.dim == 2 else np.zeros_like(x)
        return x, y

    def value(self, points, t: float = 0.0) -> np.ndarray:
        x, y = self._xy(points)
        return np.stack([f(x, y, t) for f in self._f], axis=-1)

    def gradient(self, points, t: float = 0.0) -> np.ndarray:
        x, y = self._xy(points)
        return np.stack([np.stack([g(x, y, t) for g in row], axis=-1) for row in self._df], axis=-2)

    def hessian(self, points, t: float = 0.0) -> np.ndarray:
        x, y = self._xy(points)
        return np.stack([np.stack([np.stack([h(x, y, t) for h in r], axis=-1) for r in comp], axis=-2)
                         for comp in self._hf], axis=-3)

    def laplacian(self, points, t: float = 0.0) -> np.ndarray:
        x, y = self._xy(points)
        return np.stack([f(x, y, t) for f in self._lapf], axis=-1)

    def time_derivative(self, points, t: float = 0.0) -> np.ndarray:
        x, y = self._xy(points)
        return np.stack([f(x, y, t) for f in self._dtf], axis=-1)

    def __repr__(self) -> str:
        return f"VectorExpression({self.texts!r}, dim={self.dim})"


def laplacian(e: sympy.Expr, dim: int) -> sympy.Expr:
    return sum(sympy.diff(e, v, 2) for v in [X, Y][:dim])


class StreamFunction:
    """Current density ``j = (d psi/dy, -d psi/dx)``, divergence-free by construction.

    ``scale`` multiplies ``psi``; :meth:`normalised` picks it so that
    ``max |j| = 1`` on a sampling grid of the given rectangle.
    """

    def __init__(self, psi, scale: float = 1.0):
        self.text = str(psi)
        self.psi = parse(psi) if isinstance(psi, str) else sympy.sympify(psi)
        self.scale = float(scale)
        self._jx = _lambdify(sympy.diff(self.psi, Y))
        self._jy = _lambdify(-sympy.diff(self.psi, X))
        self.sym_j = (self.scale * sympy.diff(self.psi, Y), -self.scale * sympy.diff(self.psi, X))

    def j(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x, y = points[..., 0], points[..., 1]
        return self.scale * np.stack([self._jx(x, y, 0.0), self._jy(x, y, 0.0)], axis=-1)

    @classmethod
    def normalised(cls, psi, lx: float, ly: float, samples: int = 401) -> "StreamFunction":
        raw = cls(psi)
        xs, ys = np.meshgrid(np.linspace(0, lx, samples), np.linspace(0, ly, samples))
        jmax = np.linalg.norm(raw.j(np.stack([xs, ys], axis=-1)), axis=-1).max()
        if jmax == 0:
            raise ExpressionError("stream function has zero gradient everywhere")
        return cls(psi, 1.0 / jmax)

    def __repr__(self) -> str:
        return f"StreamFunction({self.text!r}, scale={self.scale!r})"


def default_stream_function(lx: float, ly: float) -> StreamFunction:
    """sin^2(pi x / lx) sin^2(pi y / ly), scaled so that max |j| = 1."""
    psi = f"sin(pi*x/{lx!r})**2*sin(pi*y/{ly!r})**2"
    return StreamFunction.normalised(psi, lx, ly)


def manufactured_forcing(u: VectorExpression, coeffs, stream: StreamFunction | None = None):
    """Right-hand side ``f`` that makes ``u`` an exact solution of

    u_t - b1 Lap u + b2 Lap^2 u - b3 (1 - |u|^2) u + b4 u x Lap u
        - b5 Lap(|u|^2 u) - b6 (j . grad) u = f.
    """
    dim = u.dim
    comps = u.exprs
    norm2 = sum(c**2 for c in comps)
    lap = [laplacian(c, dim) for c in comps]
    out = []
    for a, c in enumerate(comps):
        f = (sympy.diff(c, T) - coeffs.beta1 * lap[a] + coeffs.beta2 * laplacian(lap[a], dim)
             - coeffs.beta3 * (1 - norm2) * c - coeffs.beta5 * laplacian(norm2 * c, dim))
        if len(comps) == 3 and coeffs.beta4:
            b, d = (a + 1) % 3, (a + 2) % 3
            f += coeffs.beta4 * (comps[b] * lap[d] - comps[d] * lap[b])
        if coeffs.beta6 and stream is not None:
            jx, jy = stream.sym_j
            f -= coeffs.beta6 * (jx * sympy.diff(c, X) + jy * sympy.diff(c, Y))
        out.append(sympy.simplify(f) if len(str(f)) < 400 else f)
    return VectorExpression(out, dim=dim)
