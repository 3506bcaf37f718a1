"""C1-conforming spaces: cubic Hermite intervals and full HCT macroelements.

Local polynomials are stored as coefficients of scaled monomials
``((x - c) / H) ** a * ((y - c_y) / H) ** b`` where ``c`` is the barycenter of
the piece (interval or Clough-Tocher subtriangle) and ``H`` the cell diameter.
In 2D every basis function is built directly on the physical cell by solving
the 30 x 30 system made of the 12 degree-of-freedom conditions and 18 C0/C1
matching conditions across the three internal edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshError, split_coords
from .quadrature import QuadratureRule, default_rule

HERMITE1D = "hermite1d"
HCT2D = "hct2d"

_EXPONENTS = {
    1: [(0,), (1,), (2,), (3,)],
    2: [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)],
}


class SingularElementError(MeshError):
    def __init__(self, cell: int, detail: str = ""):
        super().__init__(f"singular local C1 system on cell {cell} {detail}".strip())
        self.cell = cell


def _pow(z, p):
    if p < 0:
        return np.zeros_like(z)
    return z**p


def monomials(x: np.ndarray, center: np.ndarray, scale: np.ndarray, order: int = 2):
    """Scaled cubic monomials and their derivatives.

    ``x`` and ``center`` have shape (..., dim) and ``scale`` shape (...).
    Returns values (..., nm) and, depending on ``order``, gradients
    (..., nm, dim) and Hessians (..., nm, dim, dim).
    """
    dim = x.shape[-1]
    exps = _EXPONENTS[dim]
    H = np.asarray(scale)[..., None]
    z = (x - center) / H
    vals = np.stack([np.prod([_pow(z[..., d], e[d]) for d in range(dim)], axis=0) for e in exps], axis=-1)
    out = [vals]
    if order >= 1:
        grads = np.empty(vals.shape + (dim,))
        for m, e in enumerate(exps):
            for d in range(dim):
                terms = [e[d] * _pow(z[..., d], e[d] - 1) if dd == d else _pow(z[..., dd], e[dd])
                         for dd in range(dim)]
                grads[..., m, d] = np.prod(terms, axis=0) / H[..., 0]
        out.append(grads)
    if order >= 2:
        hess = np.empty(vals.shape + (dim, dim))
        for m, e in enumerate(exps):
            for d1 in range(dim):
                for d2 in range(dim):
                    k = [0] * dim
                    k[d1] += 1
                    k[d2] += 1
                    terms = []
                    for dd in range(dim):
                        p = e[dd]
                        fac = 1.0
                        for j in range(k[dd]):
                            fac *= p - j
                        terms.append(fac * _pow(z[..., dd], p - k[dd]))
                    hess[..., m, d1, d2] = np.prod(terms, axis=0) / H[..., 0] ** 2
        out.append(hess)
    return out if len(out) > 1 else out[0]


class C1Space:
    """Global C1 space on ``mesh`` with cached basis data at quadrature points.

    Attributes of interest:

    ``n_dofs``      number of scalar degrees of freedom
    ``cell_dofs``   (n_cells, n_local) global dof indices
    ``qx, qw``      physical quadrature points (n_cells, nq, dim) and weights
    ``phi, dphi, lap``  basis values, gradients and Laplacians at ``qx``
    """

    def __init__(self, mesh: Mesh, quad: QuadratureRule | None = None):
        if quad is None:
            quad = default_rule(mesh.dim)
        if quad.dim != mesh.dim:
            raise ValueError(f"quadrature dim {quad.dim} does not match mesh dim {mesh.dim}")
        self.mesh = mesh
        self.quad = quad
        self.dim = mesh.dim
        if mesh.dim == 1:
            self.element_kind = HERMITE1D
            self._build_hermite()
        else:
            self.element_kind = HCT2D
            self._build_hct()
        self._build_quadrature_cache()
        self._prolongation = None

    # -- construction -------------------------------------------------------
    def _build_hermite(self):
        mesh = self.mesh
        nv = mesh.n_vertices
        self.n_dofs = 2 * nv
        c = mesh.cells
        self.cell_dofs = np.stack([2 * c[:, 0], 2 * c[:, 0] + 1, 2 * c[:, 1], 2 * c[:, 1] + 1], axis=1)
        coords = mesh.cell_coords  # (nc, 2, 1)
        self.scale = np.abs(mesh.measures)
        self.piece_coords = coords[:, None]  # one piece per cell
        self.piece_centers = coords.mean(axis=1)[:, None]
        ctr = self.piece_centers[:, 0]
        D = np.empty((mesh.n_cells, 4, 4))
        for k, end in enumerate((0, 1)):
            v, g = monomials(coords[:, end], ctr, self.scale, order=1)
            D[:, 2 * k] = v
            D[:, 2 * k + 1] = g[..., 0]
        C = np.linalg.solve(D, np.broadcast_to(np.eye(4), D.shape))
        self.coef = np.swapaxes(C, 1, 2)[:, None]  # (nc, 1, nloc, nm)

    def _build_hct(self):
        mesh = self.mesh
        nv, nc = mesh.n_vertices, mesh.n_cells
        ne = len(mesh.edges)
        self.n_dofs = 3 * nv + ne
        c = mesh.cells
        ce = mesh.cell_edges
        grad_dofs = np.stack([3 * c + 1, 3 * c + 2], axis=2).reshape(nc, 6)
        self.cell_dofs = np.concatenate([3 * c, grad_dofs, 3 * nv + ce], axis=1)
        V = mesh.cell_coords
        bary, sub = split_coords(V)
        self.scale = mesh.diameters.copy()
        self.piece_coords = sub  # (nc, 3, 3, 2)
        self.piece_centers = sub.mean(axis=2)
        H = self.scale
        normals = mesh.edge_normals[ce]  # (nc, 3, 2)

        A = np.zeros((nc, 30, 30))
        row = 0

        def put(piece, block):
            A[:, row, 10 * piece:10 * piece + 10] += block

        def mono(piece, x, order):
            return monomials(x, self.piece_centers[:, piece], H, order=order)

        for i in range(3):
            put(i, mono(i, V[:, i], 0))
            row += 1
        for i in range(3):
            _, g = mono(i, V[:, i], 1)
            for d in range(2):
                put(i, g[..., d])
                row += 1
        for i in range(3):
            mid = 0.5 * (V[:, i] + V[:, (i + 1) % 3])
            _, g = mono(i, mid, 1)
            put(i, np.einsum("cmd,cd->cm", g, normals[:, i]))
            row += 1
        for i in range(3):
            left, right = i, (i - 1) % 3
            t = V[:, i] - bary
            nu = np.stack([-t[:, 1], t[:, 0]], axis=1)
            nu /= np.linalg.norm(nu, axis=1)[:, None]
            if i < 2:
                s_val, s_nrm = (0.0, 1 / 3, 2 / 3, 1.0), (0.0, 0.5, 1.0)
            else:
                # value and gradient at the barycenter already match via edges 0, 1
                s_val, s_nrm = (0.5, 1.0), (0.5, 1.0)
            for s in s_val:
                x = bary + s * t
                put(left, mono(left, x, 0))
                put(right, -mono(right, x, 0))
                row += 1
            for s in s_nrm:
                x = bary + s * t
                _, gl = mono(left, x, 1)
                _, gr = mono(right, x, 1)
                put(left, np.einsum("cmd,cd->cm", gl, nu))
                put(right, -np.einsum("cmd,cd->cm", gr, nu))
                row += 1
        assert row == 30
        rhs = np.zeros((nc, 30, 12))
        rhs[:, :12, :] = np.eye(12)
        try:
            C = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            for cell in range(nc):
                if np.linalg.matrix_rank(A[cell]) < 30:
                    raise SingularElementError(cell) from None
            raise
        resid = np.abs(np.einsum("cij,cjk->cik", A, C) - rhs).max(axis=(1, 2))
        if np.any(~np.isfinite(resid)) or resid.max() > 1e-6:
            raise SingularElementError(int(np.nanargmax(resid)), f"(residual {np.nanmax(resid):.2e})")
        # (nc, 30, 12) -> (nc, piece, basis, mono)
        self.coef = np.transpose(C.reshape(nc, 3, 10, 12), (0, 1, 3, 2)).copy()

    def _build_quadrature_cache(self):
        ref_pts, ref_w = self.quad.points, self.quad.weights
        nc = self.mesh.n_cells
        npieces = self.piece_coords.shape[1]
        xs, ws, pieces = [], [], []
        for p in range(npieces):
            P = self.piece_coords[:, p]  # (nc, dim+1, dim)
            J = np.swapaxes(P[:, 1:] - P[:, :1], 1, 2)  # (nc, dim, dim)
            x = P[:, None, 0] + np.einsum("cij,qj->cqi", J, ref_pts)
            det = np.abs(np.linalg.det(J))
            xs.append(x)
            ws.append(det[:, None] * ref_w[None, :])
            pieces.append(np.full(len(ref_w), p))
        self.qx = np.concatenate(xs, axis=1)
        self.qw = np.concatenate(ws, axis=1)
        self.qpiece = np.concatenate(pieces)
        nq = self.qx.shape[1]
        cells = np.repeat(np.arange(nc), nq).reshape(nc, nq)
        vals, grads, hess = self.basis_at(cells, np.broadcast_to(self.qpiece, (nc, nq)), self.qx, order=2)
        self.phi = vals
        self.dphi = grads
        self.lap = np.trace(hess, axis1=-2, axis2=-1)

    # -- evaluation ---------------------------------------------------------
    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    def basis_at(self, cells, pieces, x, order: int = 2):
        """Basis values (and derivatives) of ``cells`` at physical points ``x``
        lying in the given pieces.  Shapes: cells, pieces (...), x (..., dim)."""
        cells = np.asarray(cells)
        pieces = np.asarray(pieces)
        center = self.piece_centers[cells, pieces]
        out = monomials(x, center, self.scale[cells], order=order)
        coef = self.coef[cells, pieces]  # (..., nloc, nm)
        if order == 0:
            return np.einsum("...m,...im->...i", out, coef)
        res = [np.einsum("...m,...im->...i", out[0], coef),
               np.einsum("...md,...im->...id", out[1], coef)]
        if order >= 2:
            res.append(np.einsum("...mde,...im->...ide", out[2], coef))
        return res

    def piece_of(self, ref_point) -> int:
        """Piece containing a reference-cell point (the Clough-Tocher
        subtriangle in 2D; always 0 in 1D)."""
        if self.dim == 1:
            return 0
        xi, eta = ref_point
        lam = np.array([1.0 - xi - eta, xi, eta])
        # piece i is (v_i, v_{i+1}, c): where the opposite vertex weight is smallest
        return int(np.argmin([lam[2], lam[0], lam[1]]))

    def to_physical(self, cell: int, ref_point) -> np.ndarray:
        V = self.mesh.cell_coords[cell]
        ref = np.atleast_1d(np.asarray(ref_point, dtype=float))
        return V[0] + (V[1:] - V[0]).T @ ref

    # -- constraints --------------------------------------------------------
    def neumann_prolongation(self) -> sp.csr_matrix:
        """Map from free coefficients to all coefficients of functions with
        zero normal derivative on the boundary, shape (n_dofs, n_free)."""
        if self._prolongation is not None:
            return self._prolongation
        mesh = self.mesh
        N = self.n_dofs
        rows, cols, vals = [], [], []
        col = 0
        if self.dim == 1:
            bverts = {int(mesh.cells[c, f]) for c, f in mesh.boundary_facets}
            for d in range(N):
                if d % 2 == 1 and d // 2 in bverts:
                    continue
                rows.append(d); cols.append(col); vals.append(1.0); col += 1
        else:
            nv = mesh.n_vertices
            bnormals: dict[int, list] = {}
            bedges = set(mesh.boundary_edges.tolist())
            for e in bedges:
                for v in mesh.edges[e]:
                    bnormals.setdefault(int(v), []).append(mesh.edge_normals[e])
            for v in range(nv):
                rows.append(3 * v); cols.append(col); vals.append(1.0); col += 1
                if v not in bnormals:
                    for d in (1, 2):
                        rows.append(3 * v + d); cols.append(col); vals.append(1.0); col += 1
                    continue
                ns = np.array(bnormals[v])
                n0 = ns[0]
                if np.all(np.abs(ns[:, 0] * n0[1] - ns[:, 1] * n0[0]) < 1e-12):
                    # straight boundary: keep only the tangential derivative
                    t = np.array([-n0[1], n0[0]])
                    for d, tc in zip((1, 2), t):
                        if abs(tc) > 0:
                            rows.append(3 * v + d); cols.append(col); vals.append(tc)
                    col += 1
                # corner: gradient is fixed to zero
            for e in range(len(mesh.edges)):
                if e in bedges:
                    continue
                rows.append(3 * nv + e); cols.append(col); vals.append(1.0); col += 1
        P = sp.csr_matrix((vals, (rows, cols)), shape=(N, col))
        self._prolongation = P
        return P

    def dof_functionals(self, cell: int) -> np.ndarray:
        """Apply the local dof functionals to the local basis of ``cell`` by
        point evaluation (vertex values and gradients are taken from the piece
        that does *not* define them in the construction, edge normals from
        the piece carrying the edge).  The result should be the identity."""
        nloc = self.n_local
        out = np.zeros((nloc, nloc))
        V = self.mesh.cell_coords[cell]
        if self.dim == 1:
            for k in range(2):
                v, g = self.basis_at(np.array([cell]), np.array([0]), V[k][None], order=1)
                out[2 * k] = v[0]
                out[2 * k + 1] = g[0, :, 0]
            return out
        normals = self.mesh.edge_normals[self.mesh.cell_edges[cell]]
        for i in range(3):
            p = (i - 1) % 3
            v, g = self.basis_at(np.array([cell]), np.array([p]), V[i][None], order=1)
            out[i] = v[0]
            out[3 + 2 * i] = g[0, :, 0]
            out[4 + 2 * i] = g[0, :, 1]
            mid = 0.5 * (V[i] + V[(i + 1) % 3])
            _, g = self.basis_at(np.array([cell]), np.array([i]), mid[None], order=1)
            out[9 + i] = g[0] @ normals[i]
        return out


@dataclass(eq=False)
class Field:
    """Discrete function with ``m`` components; ``coeffs`` is component-major."""

    space: C1Space
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.m not in (1, 3):
            raise ValueError(f"component count must be 1 or 3, got {self.m}")
        if self.coeffs.shape != (self.m * self.space.n_dofs,):
            raise ValueError(
                f"expected {self.m * self.space.n_dofs} coefficients, got {self.coeffs.shape}")

    @classmethod
    def zeros(cls, space: C1Space, m: int) -> "Field":
        return cls(space, m, np.zeros(m * space.n_dofs))

    @property
    def blocks(self) -> np.ndarray:
        """(m, n_dofs) view of the coefficients."""
        return self.coeffs.reshape(self.m, self.space.n_dofs)

    def local(self) -> np.ndarray:
        """(n_cells, m, n_local) coefficients gathered per cell."""
        return np.transpose(self.blocks[:, self.space.cell_dofs], (1, 0, 2))

    def at_quadrature(self, order: int = 1):
        """Values (nc, nq, m), gradients (nc, nq, m, dim) and, with
        ``order=2``, Laplacians (nc, nq, m) at the cached quadrature points."""
        S = self.space
        loc = self.local()
        locT = np.swapaxes(loc, 1, 2)
        vals = np.matmul(S.phi, locT)
        if order == 0:
            return vals
        grads = np.matmul(loc[:, None], S.dphi)
        if order == 1:
            return vals, grads
        return vals, grads, np.matmul(S.lap, locT)

    def _check(self, other: "Field"):
        if other.space is not self.space or other.m != self.m:
            raise ValueError("fields live on different spaces")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.space, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.space, self.m, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "Field":
        return Field(self.space, self.m, c * self.coeffs)

    __rmul__ = __mul__

    def copy(self) -> "Field":
        return Field(self.space, self.m, self.coeffs.copy())


def build_space(mesh: Mesh, quad: QuadratureRule | None = None) -> C1Space:
    return C1Space(mesh, quad)


def _sample(f, x: np.ndarray, t: float, m: int):
    """Values (n, m) and gradients (n, m, dim) of ``f`` at points ``x``."""
    if hasattr(f, "value") and hasattr(f, "gradient"):
        vals, grads = f.value(x, t), f.gradient(x, t)
    else:
        vals, grads = f(x)
    vals = np.asarray(vals, dtype=float)
    grads = np.asarray(grads, dtype=float)
    n, dim = x.shape
    if vals.ndim == 1:
        vals = vals[:, None]
    if grads.ndim == 2:
        grads = grads[:, None, :]
    if vals.shape != (n, m) or grads.shape != (n, m, dim):
        raise ValueError(
            f"function returned shapes {vals.shape}, {grads.shape}; expected ({n}, {m}) "
            f"and ({n}, {m}, {dim})")
    return vals, grads


def interpolate(space: C1Space, m: int, f, t: float = 0.0) -> Field:
    """Nodal interpolant: vertex values and gradients, and (HCT) normal
    derivatives at edge midpoints along the global edge normals.

    ``f`` is either an object with ``value(x, t)`` / ``gradient(x, t)``
    methods or a callable ``x -> (values, gradients)``.
    """
    mesh = space.mesh
    coeffs = np.zeros((m, space.n_dofs))
    vals, grads = _sample(f, mesh.vertices, t, m)
    if space.dim == 1:
        coeffs[:, 0::2] = vals.T
        coeffs[:, 1::2] = grads[:, :, 0].T
    else:
        nv = mesh.n_vertices
        coeffs[:, 0:3 * nv:3] = vals.T
        coeffs[:, 1:3 * nv:3] = grads[:, :, 0].T
        coeffs[:, 2:3 * nv:3] = grads[:, :, 1].T
        mid = mesh.vertices[mesh.edges].mean(axis=1)
        _, g = _sample(f, mid, t, m)
        coeffs[:, 3 * nv:] = np.einsum("ead,ed->ae", g, mesh.edge_normals)
    field = Field(space, m, coeffs.ravel())
    if not np.all(np.isfinite(field.coeffs)):
        raise ValueError("interpolated function produced non-finite values")
    return field


def eval_field(field: Field, cell: int, ref_point):
    """Value (m,), gradient (m, dim) and Laplacian (m,) at a reference point
    of ``cell``."""
    S = field.space
    if not 0 <= cell < S.mesh.n_cells:
        raise IndexError(f"cell {cell} out of range [0, {S.mesh.n_cells})")
    x = S.to_physical(cell, ref_point)
    piece = S.piece_of(np.atleast_1d(ref_point))
    return eval_at(field, np.array([cell]), np.array([piece]), x[None])


def eval_at(field: Field, cells, pieces, x):
    """Vectorised evaluation at physical points with known cell and piece.

    Returns value (..., m), gradient (..., m, dim), Laplacian (..., m); a
    leading axis of length one is squeezed away.
    """
    S = field.space
    vals, grads, hess = S.basis_at(cells, pieces, x, order=2)
    loc = field.local()[cells]  # (..., m, nloc)
    v = np.einsum("...i,...ai->...a", vals, loc)
    g = np.einsum("...id,...ai->...ad", grads, loc)
    lap = np.einsum("...i,...ai->...a", np.trace(hess, axis1=-2, axis2=-1), loc)
    if v.shape[0] == 1:
        return v[0], g[0], lap[0]
    return v, g, lap


def eval_hessian_at(field: Field, cells, pieces, x) -> np.ndarray:
    """Hessian (..., m, dim, dim) at physical points."""
    _, _, hess = field.space.basis_at(cells, pieces, x, order=2)
    loc = field.local()[cells]
    return np.einsum("...ide,...ai->...ade", hess, loc)
