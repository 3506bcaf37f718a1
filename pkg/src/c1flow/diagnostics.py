"""Discrete norms, differences between nested discretisations, convergence
rates and the discrete L2 stability monitor."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .c1space import C1Space, Field
from .quadrature import default_rule

NORMS = ("l2", "h1_semi", "h2_broken", "l4")


@dataclass(frozen=True)
class NormReport:
    """L2, H1-seminorm, broken Laplacian and L4 norms of one field.

    ``h2_full`` (the broken Hessian seminorm) is only filled on request.
    """

    l2: float
    h1_semi: float
    h2_broken: float
    l4: float
    h2_full: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def __getitem__(self, name: str) -> float:
        return getattr(self, name)


def _norms_from_values(w, v, g, lap, hess=None) -> NormReport:
    """Norms of a function sampled at quadrature points.

    ``w`` (...,), ``v`` (..., m), ``g`` (..., m, dim), ``lap`` (..., m),
    ``hess`` (..., m, dim, dim).
    """
    s = np.sum(v * v, axis=-1)
    full = None
    if hess is not None:
        full = math.sqrt(float(np.sum(w * np.sum(hess * hess, axis=(-1, -2, -3)))))
    return NormReport(
        l2=math.sqrt(float(np.sum(w * s))),
        h1_semi=math.sqrt(float(np.sum(w * np.sum(g * g, axis=(-1, -2))))),
        h2_broken=math.sqrt(float(np.sum(w * np.sum(lap * lap, axis=-1)))),
        l4=float(np.sum(w * s * s)) ** 0.25,
        h2_full=full,
    )


def _hessian_at_quadrature(U: Field) -> np.ndarray:
    S = U.space
    nc, nq = S.qw.shape
    cells = np.repeat(np.arange(nc), nq).reshape(nc, nq)
    _, _, hess = S.basis_at(cells, np.broadcast_to(S.qpiece, (nc, nq)), S.qx, order=2)
    return np.einsum("cqide,cai->cqade", hess, U.local())


def compute_norms(U: Field, full_hessian: bool = False) -> NormReport:
    """Norms of ``U`` by the space's quadrature; the Laplacian is taken piece
    by piece (per interval in 1D, per Clough-Tocher subtriangle in 2D)."""
    v, g, lap = U.at_quadrature(2)
    hess = _hessian_at_quadrature(U) if full_hessian else None
    return _norms_from_values(U.space.qw, v, g, lap, hess)


def error_against(U: Field, u, t: float = 0.0, oversample: int = 1,
                  full_hessian: bool = False) -> NormReport:
    """Norms of ``U - u(., t)`` for an exact function ``u`` with ``value``,
    ``gradient``, ``laplacian`` (and ``hessian``) methods.

    ``oversample > 1`` splits every piece into ``oversample`` parts per
    direction before applying the quadrature rule.
    """
    S = U.space
    if oversample == 1:
        x, w, cells, pieces = S.qx, S.qw, None, None
    else:
        x, w, cells, pieces = _piece_quadrature(S, oversample)
    if cells is None:
        v, g, lap = U.at_quadrature(2)
        hess = _hessian_at_quadrature(U) if full_hessian else None
    else:
        v, g, lap, hess = _eval_all(U, cells, pieces, x)
    ev = np.asarray(u.value(x, t)).reshape(v.shape)
    eg = np.asarray(u.gradient(x, t)).reshape(g.shape)
    el = np.asarray(u.laplacian(x, t)).reshape(lap.shape)
    dh = None
    if full_hessian:
        dh = hess - np.asarray(u.hessian(x, t)).reshape(hess.shape)
    return _norms_from_values(w, v - ev, g - eg, lap - el, dh)


def _subdivision(dim: int, n: int) -> np.ndarray:
    """Reference simplex split uniformly into n (1D) or n^2 (2D) sub-simplices,
    as vertex arrays (nsub, dim+1, dim)."""
    if dim == 1:
        a = np.arange(n) / n
        return np.stack([a, a + 1.0 / n], axis=1)[..., None]
    out = []
    for i in range(n):
        for j in range(n - i):
            p = np.array([i, j]) / n
            out.append([p, p + [1 / n, 0], p + [0, 1 / n]])
            if i + j < n - 1:
                out.append([p + [1 / n, 0], p + [1 / n, 1 / n], p + [0, 1 / n]])
    return np.array(out)


def _piece_quadrature(S: C1Space, subdiv: int):
    """Default rule on every piece split into ``subdiv`` parts per direction."""
    rule = default_rule(S.dim)
    sub = _subdivision(S.dim, subdiv)
    ref = np.concatenate([T[0] + rule.points @ (T[1:] - T[0]) for T in sub])
    refw = np.concatenate([rule.weights * abs(np.linalg.det(T[1:] - T[0])) for T in sub])
    nc, npieces = S.piece_coords.shape[:2]
    xs, ws, ps = [], [], []
    for p in range(npieces):
        P = S.piece_coords[:, p]
        J = np.swapaxes(P[:, 1:] - P[:, :1], 1, 2)
        xs.append(P[:, None, 0] + np.einsum("cij,qj->cqi", J, ref))
        ws.append(np.abs(np.linalg.det(J))[:, None] * refw)
        ps.append(np.full(len(refw), p))
    x = np.concatenate(xs, axis=1)
    nq = x.shape[1]
    cells = np.repeat(np.arange(nc), nq).reshape(nc, nq)
    pieces = np.broadcast_to(np.concatenate(ps), (nc, nq))
    return x, np.concatenate(ws, axis=1), cells, pieces


def _eval_all(U: Field, cells, pieces, x):
    vals, grads, hess = U.space.basis_at(cells, pieces, x, order=2)
    loc = U.local()[cells]
    v = np.einsum("...i,...ai->...a", vals, loc)
    g = np.einsum("...id,...ai->...ad", grads, loc)
    h = np.einsum("...ide,...ai->...ade", hess, loc)
    return v, g, np.trace(h, axis1=-2, axis2=-1), h


# -- nested differences ----------------------------------------------------------

class NonNestedError(ValueError):
    pass


def _clip(poly: np.ndarray, a: np.ndarray, b: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Clip a convex polygon against the half-plane left of a->b (``inside``
    is any point known to lie in it, to fix orientation)."""
    nrm = np.array([a[1] - b[1], b[0] - a[0]])
    if nrm @ (inside - a) < 0:
        nrm = -nrm
    d = (poly - a) @ nrm
    scale = np.abs(nrm).sum() * max(np.abs(poly).max(), 1.0)
    d[np.abs(d) < 1e-13 * scale] = 0.0
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        dp, dq = d[i], d[(i + 1) % n]
        if dp >= 0:
            out.append(p)
        if (dp > 0 and dq < 0) or (dp < 0 and dq > 0):
            out.append(p + dp / (dp - dq) * (q - p))
    return np.array(out) if out else np.zeros((0, 2))


def _intersect_triangles(T1: np.ndarray, T2: np.ndarray) -> np.ndarray:
    poly = T1.copy()
    c = T2.mean(axis=0)
    for i in range(3):
        if len(poly) < 3:
            break
        poly = _clip(poly, T2[i], T2[(i + 1) % 3], c)
    return poly


@dataclass
class NestedQuadrature:
    """Quadrature on the common refinement of a coarse and a fine space.

    Each integration point knows its cell and piece in both spaces, so both
    fields are evaluated as polynomials and the difference is integrated
    exactly up to the rule's degree.
    """

    x: np.ndarray
    w: np.ndarray
    coarse_cell: np.ndarray
    coarse_piece: np.ndarray
    fine_cell: np.ndarray
    fine_piece: np.ndarray


def _locate(coarse: C1Space, pts: np.ndarray) -> np.ndarray:
    """Coarse cell containing each point (centroids of fine cells)."""
    V = coarse.mesh.cell_coords
    out = np.full(len(pts), -1)
    if coarse.dim == 1:
        lo = np.minimum(V[:, 0, 0], V[:, 1, 0])
        hi = np.maximum(V[:, 0, 0], V[:, 1, 0])
        for i, p in enumerate(pts[:, 0]):
            hit = np.nonzero((lo <= p) & (p <= hi))[0]
            if len(hit):
                out[i] = hit[0]
        return out
    J = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]], axis=2)  # (nc, 2, 2)
    Jinv = np.linalg.inv(J)
    for start in range(0, len(pts), 512):
        p = pts[start:start + 512]
        lam = np.einsum("cij,pcj->pci", Jinv, p[:, None, :] - V[None, :, 0])
        l0 = 1.0 - lam.sum(axis=-1)
        ok = (lam.min(axis=-1) >= -1e-10) & (l0 >= -1e-10)
        first = np.where(ok.any(axis=1), ok.argmax(axis=1), -1)
        out[start:start + 512] = first
    return out


def nested_quadrature(coarse: C1Space, fine: C1Space, degree: int = 10) -> NestedQuadrature:
    """Build the common-refinement quadrature; raises NonNestedError if some
    fine cell is not contained in a coarse cell."""
    if coarse.dim != fine.dim:
        raise NonNestedError("spaces have different dimensions")
    fV = fine.mesh.cell_coords
    owner = _locate(coarse, fV.mean(axis=1))
    if np.any(owner < 0):
        raise NonNestedError(f"fine cell {int(np.argmin(owner))} lies outside the coarse mesh")
    cV = coarse.mesh.cell_coords[owner]
    tol = 1e-10 * coarse.mesh.h
    if coarse.dim == 1:
        lo, hi = cV.min(axis=1)[:, 0], cV.max(axis=1)[:, 0]
        if np.any(fV[..., 0] < lo[:, None] - tol) or np.any(fV[..., 0] > hi[:, None] + tol):
            raise NonNestedError("fine mesh does not refine the coarse mesh")
        rule = default_rule(1, degree)
        a, b = fV[:, 0, 0], fV[:, 1, 0]
        x = (a[:, None] + (b - a)[:, None] * rule.points[:, 0])[..., None]
        w = np.abs(b - a)[:, None] * rule.weights
        nf, nq = w.shape
        zeros = np.zeros((nf, nq), dtype=int)
        return NestedQuadrature(x.reshape(-1, 1), w.ravel(), np.repeat(owner, nq), zeros.ravel(),
                                np.repeat(np.arange(nf), nq), zeros.ravel())
    # every fine vertex inside its coarse owner
    J = np.stack([cV[:, 1] - cV[:, 0], cV[:, 2] - cV[:, 0]], axis=2)
    lam = np.einsum("cij,ckj->cki", np.linalg.inv(J), fV - cV[:, None, 0])
    if np.any(lam < -1e-9) or np.any(lam.sum(axis=-1) > 1 + 1e-9):
        raise NonNestedError("fine mesh does not refine the coarse mesh")
    rule = default_rule(2, degree)
    xs, ws, cc, cp, fc, fp = [], [], [], [], [], []
    for f in range(len(fV)):
        c = owner[f]
        for q in range(3):
            Tf = fine.piece_coords[f, q]
            for p in range(3):
                poly = _intersect_triangles(Tf, coarse.piece_coords[c, p])
                if len(poly) < 3:
                    continue
                for i in range(1, len(poly) - 1):
                    A, B, C = poly[0], poly[i], poly[i + 1]
                    area = 0.5 * abs((B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0]))
                    if area <= 1e-14 * fine.mesh.h ** 2:
                        continue
                    xs.append(A + np.outer(rule.points[:, 0], B - A) + np.outer(rule.points[:, 1], C - A))
                    ws.append(2.0 * area * rule.weights)
                    cc.append(c); cp.append(p); fc.append(f); fp.append(q)
    nq = len(rule.weights)
    rep = lambda a: np.repeat(np.asarray(a), nq)
    return NestedQuadrature(np.concatenate(xs), np.concatenate(ws), rep(cc), rep(cp), rep(fc), rep(fp))


def error_between(coarse: Field, fine: Field, nq: NestedQuadrature | None = None,
                  full_hessian: bool = False) -> NormReport:
    """Norms of ``coarse - fine`` for fields on nested meshes.

    Pass a precomputed ``nq`` (from :func:`nested_quadrature`) when comparing
    many pairs of fields on the same two spaces.
    """
    if coarse.m != fine.m:
        raise ValueError("fields have different component counts")
    if nq is None:
        nq = nested_quadrature(coarse.space, fine.space)
    vc, gc, lc, hc = _eval_all(coarse, nq.coarse_cell, nq.coarse_piece, nq.x)
    vf, gf, lf, hf = _eval_all(fine, nq.fine_cell, nq.fine_piece, nq.x)
    return _norms_from_values(nq.w, vc - vf, gc - gf, lc - lf, hc - hf if full_hessian else None)


# -- trajectories and rates ------------------------------------------------------

class NormTracker:
    """Callback recording running maxima (L-infinity in time) of the norms of
    the error or of the field itself."""

    def __init__(self, measure):
        self.measure = measure
        self.max = {k: 0.0 for k in NORMS}
        self.series: list[tuple[int, float, NormReport]] = []

    def __call__(self, step: int, t: float, U: Field) -> None:
        r = self.measure(step, t, U)
        self.series.append((step, t, r))
        for k in NORMS:
            self.max[k] = max(self.max[k], r[k])

    @property
    def linf_time(self) -> NormReport:
        return NormReport(**self.max)


@dataclass
class RateTable:
    levels: list  # [(h, NormReport)]
    rates: dict = field(default_factory=dict)  # norm -> list of rates

    def rows(self):
        """(h, errors..., rates...) per level; the first level has no rates."""
        for i, (h, rep) in enumerate(self.levels):
            r = {k: (self.rates[k][i - 1] if i else None) for k in self.rates}
            yield h, rep, r

    def finest(self, norm: str) -> float:
        return self.rates[norm][-1]

    def format(self) -> str:
        names = list(self.rates)
        head = f"{'h':>10}" + "".join(f"{n:>14}{'rate':>7}" for n in names)
        lines = [head]
        for h, rep, r in self.rows():
            cells = "".join(f"{rep[n]:14.4e}" + (f"{r[n]:7.2f}" if r[n] is not None else f"{'-':>7}")
                            for n in names)
            lines.append(f"{h:10.4g}" + cells)
        return "\n".join(lines)


def rate_table(errors, norms=NORMS[:3]) -> RateTable:
    """log2 ratios of consecutive errors; ``errors`` is a list of (h, NormReport)
    with h halving from one level to the next."""
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    for (h0, _), (h1, _) in zip(errors, errors[1:]):
        if not abs(h0 / h1 - 2.0) <= 1e-8:
            raise ValueError(f"mesh sizes {h0:g} -> {h1:g} are not a halving")
    rates = {}
    for n in norms:
        rates[n] = [math.log2(e0[n] / e1[n]) if e1[n] > 0 and e0[n] > 0 else math.nan
                    for (_, e0), (_, e1) in zip(errors, errors[1:])]
    return RateTable(errors, rates)


@dataclass
class StabilityRecord:
    step: int
    t: float
    l2: float
    increment: float
    laplacian: float
    gradient: float
    l4_pow4: float
    accumulated: float


class StabilityMonitor:
    """Per-step terms of the discrete L2 stability bound

        ||U^n||^2 + sum_m ||D U^m||^2 + k sum_m ||Lap U^m||^2,

    where D U^m = U^m - U^{m-1} (Euler) or 2U^m - U^{m-1} (``bdf2=True``).
    """

    def __init__(self, k: float, bdf2: bool = False):
        self.k = k
        self.bdf2 = bdf2
        self.records: list[StabilityRecord] = []
        self._prev: Field | None = None
        self._sum_inc = 0.0
        self._sum_lap = 0.0

    def __call__(self, step: int, t: float, U: Field) -> None:
        rep = compute_norms(U)
        inc = 0.0
        if self._prev is not None and step > 0:
            D = 2.0 * U - self._prev if self.bdf2 else U - self._prev
            inc = compute_norms(D).l2
            self._sum_inc += inc**2
            self._sum_lap += self.k * rep.h2_broken**2
        self._prev = U.copy()
        acc = rep.l2**2 + self._sum_inc + self._sum_lap
        self.records.append(StabilityRecord(step, t, rep.l2, inc, rep.h2_broken, rep.h1_semi,
                                            rep.l4**4, acc))

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @staticmethod
    def columns() -> list[str]:
        return [f.name for f in fields(StabilityRecord)]
