"""Independent reference computations shared by the tests: pointwise
evaluation of basis functions and dense brute-force assembly."""

import numpy as np

from c1flow.c1space import Field, eval_at

PSI = "x*(1-x)*y*(1-y)"


def quadrature_points(S):
    nc, nq = S.qw.shape
    cells = np.repeat(np.arange(nc), nq)
    pieces = S.qpiece.reshape(-1) if S.qpiece.ndim == 2 else np.tile(S.qpiece, nc)
    return S.qw.reshape(-1), cells, pieces, S.qx.reshape(nc * nq, -1)


def pointwise(S, m):
    """Values, gradients and Laplacians of every global basis function (one
    unit coefficient vector at a time) at all quadrature points."""
    w, cells, pieces, x = quadrature_points(S)
    N = m * S.n_dofs
    V, G, L = [], [], []
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        v, g, lap = eval_at(Field(S, m, e), cells, pieces, x)
        V.append(v), G.append(g), L.append(lap)
    return w, x, np.array(V), np.array(G), np.array(L)


def dense_mass(S, m):
    w, _, V, _, _ = pointwise(S, m)
    return np.einsum("q,iqa,jqa->ji", w, V, V)


def dense_operator(S, coeffs, phi_coeffs=None, shift=0.0):
    """Operator linear part + B(phi) + C(phi) - convection, entry by entry."""
    m = coeffs.m
    w, x, V, G, L = pointwise(S, m)
    A = (coeffs.beta1 * np.einsum("q,iqad,jqad->ji", w, G, G)
         + coeffs.beta2 * np.einsum("q,iqa,jqa->ji", w, L, L))
    if phi_coeffs is not None:
        phi = np.einsum("i,iqa->qa", phi_coeffs, V)
        s = np.sum(phi**2, axis=1)
        A += coeffs.beta3 * np.einsum("q,iqa,jqa->ji", w * (s - shift), V, V)
        A += coeffs.beta5 * np.einsum("q,iqad,jqad->ji", w * s, G, G)
        pg = np.einsum("qa,iqad->iqd", phi, G)
        A += 2 * coeffs.beta5 * np.einsum("q,iqd,jqd->ji", w, pg, pg)
        if m == 3:
            Gd = G.swapaxes(2, 3)  # (i, q, d, a)
            cr = np.cross(np.broadcast_to(phi[None, :, None, :], Gd.shape), Gd)
            A += -coeffs.beta4 * np.einsum("q,iqda,jqda->ji", w, cr, Gd)
    if coeffs.beta6:
        j = coeffs.j_field.j(x)
        A += -coeffs.beta6 * np.einsum("q,qd,iqad,jqa->ji", w, j, G, V)
    return A


def dense_load(S, m, f, t):
    w, x, V, _, _ = pointwise(S, m)
    fx = np.asarray(f.value(x, t)).reshape(len(w), m)
    return np.einsum("q,qa,iqa->i", w, fx, V)


def dense_constrained_solve(A, b, P):
    P = P.toarray() if hasattr(P, "toarray") else P
    return P @ np.linalg.solve(P.T @ A @ P, P.T @ b)


def avv_sum_of_squares(coeffs, alpha, phi, v):
    """alpha |v|^2 + beta1 |grad v|^2 + beta2 |Lap v|^2 + beta3 ||phi| |v||^2
    + beta5 ||phi| |grad v||^2 + 2 beta5 |phi . grad v|^2, by quadrature."""
    w, cells, pieces, x = quadrature_points(v.space)
    pv, _, _ = eval_at(phi, cells, pieces, x)
    vv, vg, vl = eval_at(v, cells, pieces, x)
    p2 = np.sum(pv**2, axis=1)
    terms = (alpha * np.sum(vv**2, axis=1) + coeffs.beta1 * np.sum(vg**2, axis=(1, 2))
             + coeffs.beta2 * np.sum(vl**2, axis=1) + coeffs.beta3 * p2 * np.sum(vv**2, axis=1)
             + coeffs.beta5 * p2 * np.sum(vg**2, axis=(1, 2))
             + 2 * coeffs.beta5 * np.sum(np.einsum("qa,qad->qd", pv, vg) ** 2, axis=1))
    return float(w @ terms)


def temporal_errors(cfg, ks, k_ref, linearisation="lagged"):
    """L-infinity-in-time L2 distance to a fine-step reference on the same mesh,
    over the time levels shared with the reference."""
    import math

    from c1flow.simulation import build_problem, simulate

    def traj(k):
        c = cfg.with_overrides(k=k, linearisation=linearisation, vtk=False)
        return simulate(build_problem(c), keep_fields=True, every=1)

    ref = traj(k_ref)
    M = ref.problem.disc.mass
    out = []
    for k in ks:
        tr = traj(k)
        stride = round(k / k_ref)
        err = 0.0
        for n, U in enumerate(tr.fields):
            d = U.coeffs - ref.fields[n * stride].coeffs
            err = max(err, math.sqrt(d @ (M @ d)))
        out.append(err)
    return np.array(out)


def slopes(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])
