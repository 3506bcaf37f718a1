"""Fast self-checks of the discretisation, run by ``c1flow check``."""

from __future__ import annotations

import numpy as np

from .c1space import C1Space, Field
from .diagnostics import compute_norms
from .expr import StreamFunction
from .forms import (ModelCoefficients, assemble_B, assemble_C, assemble_convection,
                    assemble_linear_part, assemble_mass)
from .mesh import build_structured_triangulation, triangle_mesh


def _random_triangle(rng) -> np.ndarray:
    while True:
        V = rng.uniform(-1, 1, (3, 2))
        e1, e2 = V[1] - V[0], V[2] - V[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        if abs(area) > 0.05 and max(np.sum((V[i] - V[i - 1]) ** 2) for i in range(3)) <= 20 * abs(area):
            return V if area > 0 else V[[0, 2, 1]]


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    for _ in range(20):
        S = C1Space(triangle_mesh(_random_triangle(rng), np.array([[0, 1, 2]])))
        worst = max(worst, np.abs(S.dof_functionals(0) - np.eye(12)).max())
    out.append(("HCT dof matrix is the identity", worst < 1e-9, f"max deviation {worst:.1e}"))

    S = C1Space(build_structured_triangulation(1.0, 1.0, 2, 2))
    coeffs = ModelCoefficients(0.1, 0.2, 0.2, 0.1, 0.2, 0.0, m=3)
    phi = Field(S, 3, rng.standard_normal(3 * S.n_dofs))
    v = Field(S, 3, rng.standard_normal(3 * S.n_dofs))
    B = assemble_B(S, coeffs, phi)
    sym = np.linalg.norm((B - B.T).toarray()) / np.linalg.norm(B.toarray())
    out.append(("B is symmetric", sym <= 1e-12, f"relative asymmetry {sym:.1e}"))

    C = assemble_C(S, coeffs, phi)
    skew = abs(v.coeffs @ (C @ v.coeffs)) / (np.linalg.norm(C.toarray()) * (v.coeffs @ v.coeffs))
    out.append(("v^T C v vanishes", skew <= 1e-12, f"relative value {skew:.1e}"))

    M = assemble_mass(S, 3)
    gram = abs(v.coeffs @ (M @ v.coeffs) - compute_norms(v).l2 ** 2) / compute_norms(v).l2 ** 2
    out.append(("Gram matrix matches L2 norm", gram <= 1e-11, f"relative gap {gram:.1e}"))

    K = assemble_linear_part(S, coeffs)
    r = compute_norms(v)
    lin = v.coeffs @ (K @ v.coeffs)
    ref = coeffs.beta1 * r.h1_semi ** 2 + coeffs.beta2 * r.h2_broken ** 2
    out.append(("linear form matches norms", abs(lin - ref) <= 1e-9 * abs(ref),
                f"relative gap {abs(lin - ref) / abs(ref):.1e}"))

    c1 = ModelCoefficients(0.1, 0.2, 0.2, 0.0, 0.0, 1.0, m=1,
                           j_field=StreamFunction("x*(1-x)*y*(1-y)"))
    D1 = assemble_convection(S, c1, "direct").toarray()
    D2 = assemble_convection(S, c1, "divergence").toarray()
    gap = np.abs(D1 - D2).max() / np.abs(D1).max()
    out.append(("convection forms agree", gap <= 1e-10, f"relative gap {gap:.1e}"))
    return out
