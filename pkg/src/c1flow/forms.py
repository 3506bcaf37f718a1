"""Weak-form operators: mass, linear stationary part, the solution-dependent
forms B and C, convection, load vectors and the elliptic projection.

All operators act on component-major coefficient vectors of length
``m * space.n_dofs``.  Row index = test function, column = trial function.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .c1space import C1Space, Field
from .expr import StreamFunction
from .linalg import LinearSolveError, ScatterPattern, solve


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class ModelCoefficients:
    beta1: float
    beta2: float
    beta3: float
    beta4: float = 0.0
    beta5: float = 0.0
    beta6: float = 0.0
    m: int = 1
    j_field: StreamFunction | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.m not in (1, 3):
            raise CoefficientError(f"m must be 1 or 3, got {self.m}")
        if not all(math.isfinite(b) for b in self.betas):
            raise CoefficientError(f"coefficients must be finite, got {self.betas}")
        if not self.beta2 > 0:
            raise CoefficientError(f"beta2 must be positive, got {self.beta2}")
        for name in ("beta3", "beta4", "beta5", "beta6"):
            if not getattr(self, name) >= 0:
                raise CoefficientError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.m == 1 and self.beta4 != 0:
            raise CoefficientError("beta4 must be 0 for scalar problems (m=1)")

    def check_dimension(self, dim: int) -> None:
        if self.beta6 > 0:
            if dim != 2:
                raise CoefficientError(
                    "beta6 > 0 needs a 2D domain: a divergence-free current tangential "
                    "to the boundary of an interval vanishes identically")
            if self.j_field is None:
                raise CoefficientError("beta6 > 0 needs a current density (stream function)")

    @property
    def betas(self) -> tuple:
        return (self.beta1, self.beta2, self.beta3, self.beta4, self.beta5, self.beta6)

    def with_betas(self, **kw) -> "ModelCoefficients":
        return replace(self, **kw)


# -- scatter helpers ----------------------------------------------------------

def _pattern(space: C1Space, m: int, coupled: bool) -> ScatterPattern:
    cache = space.__dict__.setdefault("_patterns", {})
    key = (m, coupled)
    if key not in cache:
        N = space.n_dofs
        dofs = space.cell_dofs
        comp = np.arange(m)
        if coupled:
            # (nc, a, i, b, j)
            r = comp[None, :, None, None, None] * N + dofs[:, None, :, None, None]
            c = comp[None, None, None, :, None] * N + dofs[:, None, None, None, :]
            r, c = np.broadcast_arrays(r, c)
        else:
            # (nc, a, i, j)
            r = comp[None, :, None, None] * N + dofs[:, None, :, None]
            c = comp[None, :, None, None] * N + dofs[:, None, None, :]
            r, c = np.broadcast_arrays(r, c)
        cache[key] = ScatterPattern(r, c, (m * N, m * N))
    return cache[key]


def _scatter_diag(space: C1Space, m: int, local: np.ndarray) -> sp.csr_matrix:
    """Same (nc, nloc, nloc) local matrix on every component block."""
    vals = np.broadcast_to(local[:, None], (local.shape[0], m) + local.shape[1:])
    return _pattern(space, m, False).assemble(vals)


def _scatter_full(space: C1Space, m: int, local: np.ndarray) -> sp.csr_matrix:
    """Local matrices of shape (nc, m, nloc, m, nloc)."""
    return _pattern(space, m, True).assemble(local)


def _wgram(w: np.ndarray, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """sum_q w[c,q] a[c,q,i] b[c,q,j] for (nc, nq, nloc) arrays; extra
    trailing axes of ``a``/``b`` (e.g. spatial directions) are contracted."""
    if b is None:
        b = a
    nc, nq, nloc = a.shape[:3]
    wa = a * w.reshape(w.shape + (1,) * (a.ndim - 2))
    if a.ndim == 4:
        wa = np.swapaxes(wa, 2, 3).reshape(nc, -1, nloc)
        b = np.swapaxes(b, 2, 3).reshape(nc, -1, nloc)
    return np.matmul(np.swapaxes(wa, 1, 2), b)


# -- coefficient fields at quadrature points -----------------------------------

def _values_at_quadrature(space: C1Space, u, m: int, t: float = 0.0, order: int = 0):
    """Values (nc, nq, m) [and gradients, Laplacians] of a Field or an exact
    function (object with value/gradient/laplacian methods) at quadrature points."""
    if isinstance(u, Field):
        if u.space is not space:
            raise ValueError("field lives on a different space")
        if u.m != m:
            raise ValueError(f"field has {u.m} components, expected {m}")
        return u.at_quadrature(order) if order else u.at_quadrature(0)
    pts = space.qx
    vals = np.asarray(u.value(pts, t), dtype=float).reshape(pts.shape[:2] + (-1,))
    if vals.shape[-1] != m:
        raise ValueError(f"function has {vals.shape[-1]} components, expected {m}")
    if order == 0:
        return vals
    grads = np.asarray(u.gradient(pts, t), dtype=float).reshape(pts.shape[:2] + (m, space.dim))
    if order == 1:
        return vals, grads
    laps = np.asarray(u.laplacian(pts, t), dtype=float).reshape(pts.shape[:2] + (m,))
    return vals, grads, laps


# -- operators -----------------------------------------------------------------

def assemble_mass(space: C1Space, m: int = 1) -> sp.csr_matrix:
    """Gram matrix of the basis, repeated on each of the ``m`` component blocks."""
    return _scatter_diag(space, m, _wgram(space.qw, space.phi))


def assemble_linear_part(space: C1Space, coeffs: ModelCoefficients) -> sp.csr_matrix:
    """beta1 <grad v, grad w> + beta2 <Lap v, Lap w> (no mass term)."""
    local = (coeffs.beta1 * _wgram(space.qw, space.dphi)
             + coeffs.beta2 * _wgram(space.qw, space.lap))
    return _scatter_diag(space, coeffs.m, local)


def _B_local(space: C1Space, coeffs: ModelCoefficients, phi_q: np.ndarray,
             reaction_shift: float = 0.0) -> np.ndarray:
    m = coeffs.m
    w = space.qw
    s = np.einsum("cqa,cqa->cq", phi_q, phi_q)
    nc, nloc = space.cell_dofs.shape
    out = np.zeros((nc, m, nloc, m, nloc))
    diag = coeffs.beta3 * _wgram(w * (s - reaction_shift), space.phi)
    if coeffs.beta5:
        diag = diag + coeffs.beta5 * _wgram(w * s, space.dphi)
        for a in range(m):
            for b in range(a, m):
                blk = 2.0 * coeffs.beta5 * _wgram(w * phi_q[..., a] * phi_q[..., b], space.dphi)
                out[:, a, :, b, :] += blk
                if b != a:
                    out[:, b, :, a, :] += blk
    for a in range(m):
        out[:, a, :, a, :] += diag
    return out


def assemble_B(space: C1Space, coeffs: ModelCoefficients, phi, reaction_shift: float = 0.0,
               t: float = 0.0) -> sp.csr_matrix:
    """beta3 <(|phi|^2 - shift) v, w> + beta5 <|phi|^2 grad v, grad w>
    + 2 beta5 sum_i <phi . d_i v, phi . d_i w>.

    ``phi`` is a Field on ``space`` or an exact function evaluated at the
    quadrature points.  ``reaction_shift=1`` gives the net reaction used by
    the time steppers.
    """
    phi_q = _values_at_quadrature(space, phi, coeffs.m, t)
    return _scatter_full(space, coeffs.m, _B_local(space, coeffs, phi_q, reaction_shift))


def _C_local(space: C1Space, coeffs: ModelCoefficients, eta_q: np.ndarray) -> np.ndarray:
    nc, nloc = space.cell_dofs.shape
    out = np.zeros((nc, 3, nloc, 3, nloc))
    w = space.qw
    G = [_wgram(w * eta_q[..., c], space.dphi) for c in range(3)]
    # (eta x e_b) . e_a = [eta]_x[a, b]
    cross = {(1, 0): (2, 1.0), (0, 1): (2, -1.0), (0, 2): (1, 1.0),
             (2, 0): (1, -1.0), (2, 1): (0, 1.0), (1, 2): (0, -1.0)}
    for (a, b), (c, sign) in cross.items():
        out[:, a, :, b, :] = -coeffs.beta4 * sign * G[c]
    return out


def assemble_C(space: C1Space, coeffs: ModelCoefficients, eta, t: float = 0.0) -> sp.csr_matrix:
    """-beta4 sum_i <eta x d_i v, d_i w>; requires m = 3."""
    if coeffs.m != 3:
        if coeffs.beta4 > 0:
            raise CoefficientError("the precession form needs m = 3")
        N = space.n_dofs * coeffs.m
        return sp.csr_matrix((N, N))
    eta_q = _values_at_quadrature(space, eta, 3, t)
    return _scatter_full(space, 3, _C_local(space, coeffs, eta_q))


def _check_tangential(space: C1Space, stream: StreamFunction) -> None:
    mesh = space.mesh
    v = mesh.vertices
    s = np.linspace(0.05, 0.95, 7)
    e = mesh.boundary_edges
    a, b = v[mesh.edges[e, 0]], v[mesh.edges[e, 1]]
    pts = a[:, None] + s[None, :, None] * (b - a)[:, None]
    jn = np.einsum("esd,ed->es", stream.j(pts), mesh.edge_normals[e])
    jmax = np.abs(stream.j(space.qx)).max()
    if jmax > 0 and np.abs(jn).max() > 1e-10 * jmax:
        warnings.warn(f"current density is not tangential to the boundary "
                      f"(max |j.n| = {np.abs(jn).max():.3e})", stacklevel=3)


def assemble_convection(space: C1Space, coeffs: ModelCoefficients,
                        form: str = "direct") -> sp.csr_matrix:
    """beta6 <(j . grad) v, w>; ``form="divergence"`` uses -beta6 <v (x) j, grad w>."""
    N = space.n_dofs * coeffs.m
    if coeffs.beta6 == 0:
        return sp.csr_matrix((N, N))
    coeffs.check_dimension(space.dim)
    stream = coeffs.j_field
    _check_tangential(space, stream)
    jq = stream.j(space.qx)
    jgrad = np.einsum("cqd,cqid->cqi", jq, space.dphi)
    if form == "direct":
        local = _wgram(space.qw, space.phi, jgrad)
    elif form == "divergence":
        local = -_wgram(space.qw, jgrad, space.phi)
    else:
        raise ValueError(f"unknown convection form {form!r}")
    return _scatter_diag(space, coeffs.m, coeffs.beta6 * local)


def assemble_load(space: C1Space, m: int, f, t: float = 0.0) -> np.ndarray:
    """Vector of <f(., t), phi_i> over all dofs; ``f`` has a ``value(points, t)``
    method or is a callable ``(points, t) -> (..., m)`` array."""
    pts = space.qx
    vals = f.value(pts, t) if hasattr(f, "value") else f(pts, t)
    vals = np.asarray(vals, dtype=float).reshape(pts.shape[:2] + (-1,))
    if vals.shape[-1] != m:
        raise ValueError(f"forcing has {vals.shape[-1]} components, expected {m}")
    loc = np.einsum("cq,cqa,cqi->aci", space.qw, vals, space.phi)
    out = np.zeros((m, space.n_dofs))
    for a in range(m):
        np.add.at(out[a], space.cell_dofs, loc[a])
    return out.ravel()


def block_prolongation(space: C1Space, m: int) -> sp.csr_matrix:
    """Neumann-constrained prolongation repeated on ``m`` component blocks."""
    P = space.neumann_prolongation()
    return sp.block_diag([P] * m, format="csr") if m > 1 else P


def solve_constrained(A, b, P, **opts):
    """Solve the Galerkin system restricted to the range of ``P``."""
    Ar = (P.T @ A @ P).tocsc()
    x, report = solve(Ar, P.T @ b, **opts)
    return P @ x, report


def elliptic_projection(space: C1Space, coeffs: ModelCoefficients, alpha: float, u_exact,
                        t: float = 0.0, solver: dict | None = None) -> Field:
    """Discrete u_h with A(u; u_h - u, chi) = 0 for all chi in the constrained
    space, where A = alpha M + linear part + B(u, u) + C(u)."""
    b1, b2 = coeffs.beta1, coeffs.beta2
    if b1 >= 0 and not alpha > 0:
        raise CoefficientError(f"alpha must be positive, got {alpha}")
    if b1 < 0 and not alpha > b1 * b1 / b2:
        raise CoefficientError(f"alpha must exceed beta1^2/beta2 = {b1 * b1 / b2:g}")
    m = coeffs.m
    u, gu, lu = _values_at_quadrature(space, u_exact, m, t, order=2)
    s = np.einsum("cqa,cqa->cq", u, u)
    A = (alpha * assemble_mass(space, m) + assemble_linear_part(space, coeffs)
         + _scatter_full(space, m, _B_local(space, coeffs, u)))
    if m == 3:
        A = A + _scatter_full(space, 3, _C_local(space, coeffs, u))

    w = space.qw
    udotgrad = np.einsum("cqk,cqkd->cqd", u, gu)
    flux = (b1 * gu + coeffs.beta5 * (s[..., None, None] * gu
                                      + 2.0 * u[..., :, None] * udotgrad[..., None, :]))
    if m == 3:
        flux = flux - coeffs.beta4 * np.cross(u[..., None, :], gu.swapaxes(-1, -2)).swapaxes(-1, -2)
    react = (alpha + coeffs.beta3 * s)[..., None] * u
    loc = (np.einsum("cq,cqa,cqi->aci", w, react, space.phi)
           + np.einsum("cq,cqad,cqid->aci", w, flux, space.dphi)
           + b2 * np.einsum("cq,cqa,cqi->aci", w, lu, space.lap))
    rhs = np.zeros((m, space.n_dofs))
    for a in range(m):
        np.add.at(rhs[a], space.cell_dofs, loc[a])
    P = block_prolongation(space, m)
    x, report = solve_constrained(A, rhs.ravel(), P, **(solver or {}))
    if not report.converged:
        from .linalg import condest
        raise LinearSolveError(
            f"elliptic projection solve failed (residual {report.residual_norm:.2e}, "
            f"condition estimate {condest(P.T @ A @ P):.2e})")
    return Field(space, m, x)


class Discretisation:
    """Operators of the time-stepping schemes on a fixed space.

    The alpha mass term of the bilinear form cancels against the explicit
    -(alpha + beta3) mass term of the schemes, so the per-step operator is

        S(phi) = linear part + B(phi; reaction |phi|^2 - 1) + C(phi) - convection.
    """

    def __init__(self, space: C1Space, coeffs: ModelCoefficients, convection_form: str = "direct"):
        coeffs.check_dimension(space.dim)
        self.space = space
        self.coeffs = coeffs
        self.m = coeffs.m
        self.mass = assemble_mass(space, self.m)
        self.linear = assemble_linear_part(space, coeffs)
        self.convection = assemble_convection(space, coeffs, convection_form)
        self.P = block_prolongation(space, self.m)
        self._static = (self.linear - self.convection).tocsr()

    @property
    def is_linear(self) -> bool:
        """True when S does not depend on the solution."""
        c = self.coeffs
        return c.beta3 == 0 and c.beta4 == 0 and c.beta5 == 0

    def coefficient_values(self, phi: Field) -> np.ndarray:
        return _values_at_quadrature(self.space, phi, self.m)

    def step_operator(self, phi: Field) -> sp.csr_matrix:
        phi_q = self.coefficient_values(phi)
        local = _B_local(self.space, self.coeffs, phi_q, reaction_shift=1.0)
        if self.m == 3 and self.coeffs.beta4:
            local = local + _C_local(self.space, self.coeffs, phi_q)
        return (self._static + _scatter_full(self.space, self.m, local)).tocsr()

    def load(self, f, t: float) -> np.ndarray:
        return assemble_load(self.space, self.m, f, t)
