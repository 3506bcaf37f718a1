import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c1flow.c1space import C1Space, Field, interpolate
from c1flow.diagnostics import compute_norms, error_against
from c1flow.expr import StreamFunction, VectorExpression
from c1flow.forms import (CoefficientError, Discretisation, ModelCoefficients, assemble_B,
                          assemble_C, assemble_convection, assemble_linear_part, assemble_load,
                          assemble_mass, elliptic_projection)
from c1flow.mesh import build_interval_mesh, build_structured_triangulation

from oracles import PSI, avv_sum_of_squares, dense_operator


def test_dense_oracle_scalar_2d(rng):
    S = C1Space(build_structured_triangulation(1, 1, 1, 1))
    c = ModelCoefficients(-0.3, 0.7, 0.4, 0.0, 0.6, 0.5, m=1, j_field=StreamFunction(PSI))
    phi = rng.standard_normal(S.n_dofs)
    disc = Discretisation(S, c)
    ref = dense_operator(S, c, phi, shift=1.0)
    got = disc.step_operator(Field(S, 1, phi)).toarray()
    np.testing.assert_allclose(got, ref, atol=1e-11 * np.abs(ref).max())


def test_dense_oracle_vector_2d(rng):
    S = C1Space(build_structured_triangulation(1, 1, 1, 1))
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.1, 0.2, 0.0, m=3)
    phi = rng.standard_normal(3 * S.n_dofs)
    ref = dense_operator(S, c, phi, shift=1.0)
    got = Discretisation(S, c).step_operator(Field(S, 3, phi)).toarray()
    np.testing.assert_allclose(got, ref, atol=1e-11 * np.abs(ref).max())


def test_dense_oracle_1d(rng):
    S = C1Space(build_interval_mesh(0, 1, 4))
    c = ModelCoefficients(0.3, 0.2, 0.5, 0.0, 0.4, 0.0, m=1)
    phi = rng.standard_normal(S.n_dofs)
    ref = dense_operator(S, c, phi)
    got = (assemble_linear_part(S, c) + assemble_B(S, c, Field(S, 1, phi))).toarray()
    np.testing.assert_allclose(got, ref, atol=1e-11 * np.abs(ref).max())


# -- frozen beam-element values -----------------------------------------------------

@pytest.mark.parametrize("h", [1.0, 0.25, 0.1])
def test_hermite_element_matrices(h):
    S = C1Space(build_interval_mesh(0, h, 1))
    M = assemble_mass(S).toarray()
    K = assemble_linear_part(S, ModelCoefficients(0.0, 1.0, 0.0)).toarray()
    # dof order: value, slope at each vertex
    np.testing.assert_allclose(M[0, 0], 13 * h / 35, rtol=1e-13)
    np.testing.assert_allclose(M[0, 1], 11 * h**2 / 210, rtol=1e-13)
    np.testing.assert_allclose(M[0, 2], 9 * h / 70, rtol=1e-13)
    np.testing.assert_allclose(K[0, 0], 12 / h**3, rtol=1e-12)
    np.testing.assert_allclose(K[1, 1], 4 / h, rtol=1e-12)
    np.testing.assert_allclose(K[1, 3], 2 / h, rtol=1e-12)


def test_mass_integrates_constants(space2d):
    M = assemble_mass(space2d)
    one = interpolate(space2d, 1, VectorExpression(["1"], dim=2))
    assert one.coeffs @ (M @ one.coeffs) == pytest.approx(1.0, rel=1e-13)


# -- structural properties -----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_B_symmetric_and_C_skew(space2d, seed):
    rng = np.random.default_rng(seed)
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.3, 0.2, 0.0, m=3)
    phi = Field(space2d, 3, rng.standard_normal(3 * space2d.n_dofs))
    B = assemble_B(space2d, c, phi).toarray()
    C = assemble_C(space2d, c, phi).toarray()
    assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()
    assert np.abs(C + C.T).max() <= 1e-12 * np.abs(C).max()
    v = rng.standard_normal(3 * space2d.n_dofs)
    assert abs(v @ C @ v) <= 1e-12 * np.abs(C).max() * (v @ v)


def test_B_is_positive_semidefinite_without_shift(space2d, rng):
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.0, 0.2, 0.0, m=1)
    B = assemble_B(space2d, c, Field(space2d, 1, rng.standard_normal(space2d.n_dofs))).toarray()
    assert np.linalg.eigvalsh(B).min() > -1e-12 * np.abs(B).max()


def test_convection_forms_agree_and_are_skew(space2d):
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.0, 0.0, 1.0, m=1, j_field=StreamFunction(PSI))
    D1 = assemble_convection(space2d, c, "direct").toarray()
    D2 = assemble_convection(space2d, c, "divergence").toarray()
    scale = np.abs(D1).max()
    assert np.abs(D1 - D2).max() <= 1e-10 * scale
    assert np.abs(D1 + D1.T).max() <= 1e-10 * scale


def test_convection_warns_for_non_tangential_current(space2d):
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.0, 0.0, 1.0, m=1, j_field=StreamFunction("x"))
    with pytest.warns(UserWarning, match="tangential"):
        assemble_convection(space2d, c)


def test_unknown_convection_form(space2d):
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.0, 0.0, 1.0, m=1, j_field=StreamFunction(PSI))
    with pytest.raises(ValueError):
        assemble_convection(space2d, c, "upwind")


def test_coercivity_identity(space2d, rng):
    c = ModelCoefficients(0.1, 0.2, 0.2, 0.1, 0.2, 0.0, m=3)
    alpha = 0.7
    M = assemble_mass(space2d, 3)
    K = assemble_linear_part(space2d, c)
    N = 3 * space2d.n_dofs
    worst = 0.0
    for _ in range(100):
        phi = Field(space2d, 3, rng.standard_normal(N))
        v = Field(space2d, 3, rng.standard_normal(N))
        A = alpha * M + K + assemble_B(space2d, c, phi) + assemble_C(space2d, c, phi)
        got = v.coeffs @ (A @ v.coeffs)
        ref = avv_sum_of_squares(c, alpha, phi, v)
        worst = max(worst, abs(got - ref) / ref)
    assert worst <= 1e-9


def test_linear_part_matches_norms(space2d, rng):
    c = ModelCoefficients(0.7, 0.3, 0.0)
    K = assemble_linear_part(space2d, c)
    for _ in range(10):
        v = Field(space2d, 1, rng.standard_normal(space2d.n_dofs))
        r = compute_norms(v)
        ref = 0.7 * r.h1_semi**2 + 0.3 * r.h2_broken**2
        assert v.coeffs @ (K @ v.coeffs) == pytest.approx(ref, rel=1e-10)


def test_coercivity_of_constrained_fields(rng):
    # beta1 < 0: alpha M + K is still coercive on Neumann fields once
    # alpha > beta1^2 / beta2, via |grad v|^2 <= |v| |Lap v|
    S = C1Space(build_structured_triangulation(2, 2, 4, 4))
    b1, b2, alpha = -2.0, 1.0, 5.0
    K = assemble_linear_part(S, ModelCoefficients(b1, b2, 1.0))
    M = assemble_mass(S)
    P = S.neumann_prolongation()
    for _ in range(100):
        v = Field(S, 1, P @ rng.standard_normal(P.shape[1]))
        r = compute_norms(v)
        assert r.h1_semi**2 <= r.l2 * r.h2_broken * (1 + 1e-10)
        a = v.coeffs @ ((alpha * M + K) @ v.coeffs)
        bound = min(b2 / 2, alpha - b1**2 / (2 * b2)) * (r.l2**2 + r.h2_broken**2)
        assert a >= bound * (1 - 1e-10)


def test_load_vector_of_constant(space2d):
    F = assemble_load(space2d, 1, VectorExpression(["2"], dim=2))
    one = interpolate(space2d, 1, VectorExpression(["1"], dim=2))
    assert one.coeffs @ F == pytest.approx(2.0, rel=1e-13)


def test_load_component_mismatch(space2d):
    with pytest.raises(ValueError):
        assemble_load(space2d, 3, VectorExpression(["1"], dim=2))


# -- coefficient validation ------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(beta2=0.0), dict(beta2=-1.0), dict(beta3=-0.1),
                                dict(beta5=-1.0), dict(m=2), dict(beta4=0.1, m=1),
                                dict(beta1=float("nan"))])
def test_invalid_coefficients(kw):
    base = dict(beta1=0.1, beta2=0.2, beta3=0.2, m=1)
    base.update(kw)
    with pytest.raises(CoefficientError):
        ModelCoefficients(**base)


def test_convection_needs_2d():
    c = ModelCoefficients(0.1, 0.2, 0.2, beta6=1.0, j_field=StreamFunction(PSI))
    with pytest.raises(CoefficientError):
        c.check_dimension(1)


def test_with_betas():
    c = ModelCoefficients(0.1, 0.2, 0.2)
    assert c.with_betas(beta3=0.5).betas == (0.1, 0.2, 0.5, 0.0, 0.0, 0.0)


# -- elliptic projection -------------------------------------------------------------

@pytest.mark.parametrize("dim, text", [(1, "3*x**2 - 2*x**3"),
                                       (2, "3*x**2 - 2*x**3 + 3*y**2 - 2*y**3")])
def test_elliptic_projection_reproduces_neumann_cubics(dim, text):
    mesh = build_interval_mesh(0, 1, 4) if dim == 1 else build_structured_triangulation(1, 1, 3, 3)
    S = C1Space(mesh)
    u = VectorExpression([text], dim=dim)
    c = ModelCoefficients(0.3, 0.2, 0.5, beta5=0.1)
    e = error_against(elliptic_projection(S, c, 1.0, u), u)
    assert e.l2 < 1e-10 and e.h2_broken < 1e-8


def test_elliptic_projection_vector_with_precession():
    S = C1Space(build_structured_triangulation(1, 1, 2, 2))
    u = VectorExpression(["3*x**2 - 2*x**3", "1", "3*y**2 - 2*y**3"], dim=2)
    c = ModelCoefficients(0.3, 0.2, 0.5, beta4=0.4, beta5=0.1, m=3)
    assert error_against(elliptic_projection(S, c, 1.0, u), u).l2 < 1e-10


def test_elliptic_projection_alpha_guard(space2d):
    u = VectorExpression(["1"], dim=2)
    with pytest.raises(CoefficientError):
        elliptic_projection(space2d, ModelCoefficients(0.1, 0.2, 0.2), 0.0, u)
    with pytest.raises(CoefficientError):
        elliptic_projection(space2d, ModelCoefficients(-2.0, 1.0, 1.0), 4.0, u)
