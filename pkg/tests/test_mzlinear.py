import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from mzmem.dynsys import DynamicalSystem, make_registry_system
from mzmem.errors import DegenerateRatio, InsufficientOrder, InvalidConfig, NeedsUserBound, NotLinear
from mzmem.mzlinear import (SemigroupConstants, alpha_ratios, convergence_predicates, decompose,
                            exact_memory_closed_form, exact_memory_oracle, exp_difference, f_p,
                            liouvillian_coefficient, memory_bound, norm_LQLn,
                            omega_q_finite_rank_bounds, semigroup_constants,
                            v_restricted_constants)


def linear(A):
    A = np.asarray(A, dtype=float)
    return DynamicalSystem(A.shape[0], lambda x: x @ A.T, linear_matrix=A)


ROT = [[0.0, 1.0], [-1.0, 0.0]]


@pytest.fixture(scope="module")
def d3():
    return decompose(make_registry_system("Linear3D"), 1.0)


def test_decompose_reassembles(d3):
    assert np.array_equal(d3.matrix, make_registry_system("Linear3D").linear_matrix)


def test_decompose_diagonal():
    d = decompose(linear(np.diag([-1.0, -2.0, -3.0])), 1.0)
    assert np.all(d.a == 0) and np.all(d.b == 0)
    assert np.array_equal(d.m11, np.diag([-2.0, -3.0]))


def test_decompose_rotation():
    d = decompose(linear(ROT), 1.0, [1.0])
    assert d.a11 == 0 and d.a.tolist() == [1.0] and d.b.tolist() == [-1.0] and d.m11.tolist() == [[0.0]]


def test_decompose_errors():
    with pytest.raises(NotLinear):
        decompose(DynamicalSystem(2, lambda x: x), 1.0)
    with pytest.raises(InvalidConfig):
        decompose(linear(ROT), 1.0, [0.0])


def test_hm2_coefficients(d3):
    got = [liouvillian_coefficient(d3, n) for n in range(3)]
    assert np.allclose(got, [-0.4560, 0.0586, -0.0192], atol=1e-3)


def test_coefficients_against_matrix_powers(d3):
    A = d3.matrix
    for n in range(1, 6):
        ref = d3.b @ np.linalg.matrix_power(d3.m11.T, n - 1) @ d3.a
        assert abs(liouvillian_coefficient(d3, n) - ref) < 1e-14
    assert liouvillian_coefficient(decompose(linear(np.diag([-1.0, -2.0])), 1.0), 3) == 0.0
    assert liouvillian_coefficient(d3, 0) == A[0, 0]


def test_norm_rotation_and_diagonal():
    assert abs(norm_LQLn(decompose(linear(ROT), 1.0, [1.0]), 1) - 1.0) < 1e-15
    assert norm_LQLn(decompose(linear(np.diag([-1.0, -2.0])), 1.0), 1) == 0.0


def test_alpha_ratios(d3):
    al = alpha_ratios(d3, 4)
    assert np.all(al > 0) and np.all(np.isfinite(al))
    for j in range(1, 5):
        assert abs(norm_LQLn(d3, j + 1) - al[j - 1] * norm_LQLn(d3, j)) < 1e-15


@pytest.mark.parametrize("A", [np.diag([-1.0, -2.0, -0.5]), ROT])
def test_alpha_degenerate(A):
    with pytest.raises(DegenerateRatio) as err:
        alpha_ratios(decompose(linear(A), 1.0), 3)
    assert err.value.order == 1


def test_semigroup_constants_linear3d(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    assert abs(c.omega - 0.6458) <= 1e-3 and abs(c.omega_q - 1.1621) <= 1e-3
    assert c.m_l == 1 and c.m_q == 1


def test_semigroup_constants_minus_identity():
    s = linear(-np.eye(3))
    c = semigroup_constants(s, None, decompose(s, 1.0))
    assert c.omega == 1.5 and c.omega_q == 2.5


def test_semigroup_constants_diagonal():
    s = linear(np.diag([-0.7, -1.0, -2.0]))
    c = semigroup_constants(s, None, decompose(s, 1.0))
    assert abs(c.omega_q - (c.omega + 0.7)) < 1e-15


def test_symmetric_negative_definite_exact():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((5, 5))
    A = -(B @ B.T) - 0.1 * np.eye(5)
    s = linear(A)
    assert semigroup_constants(s, None, decompose(s, 2.0)).omega == -0.5 * np.trace(A)


def test_needs_user_bound_for_indefinite():
    s = make_registry_system("Linear100D")
    d = decompose(s, 3.0)
    with pytest.raises(NeedsUserBound):
        semigroup_constants(s, None, d)
    c = semigroup_constants(s, None, d, inf_div=-10.0)
    assert c.omega == 5.0 and c.provenance == "UserSupplied"
    v = v_restricted_constants(d)
    assert v.omega > max(np.linalg.eigvals(s.linear_matrix).real)


def test_x1_zero_rejected():
    s = make_registry_system("Linear3D")
    with pytest.raises(InvalidConfig):
        semigroup_constants(s, None, decompose(s, 0.0))


def test_finite_rank_bounds():
    a, b = omega_q_finite_rank_bounds(0.0, 2.0, 2.0)
    assert (a, b) == (1.0, 2.0)
    assert omega_q_finite_rank_bounds(0.0, 0.0, 0.0) == (0.0, 0.0)
    a, b = omega_q_finite_rank_bounds(1.0, 1.0, 2.0)
    assert abs(a - 0.5 * (math.sqrt(2) + 1)) < 1e-15 and b == 3.0


def test_m0_prefactor(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    rep = memory_bound(d3, c, "M0")
    pref = rep.c1 / (c.omega_q - c.omega)
    assert abs(pref - 0.1964) <= 0.01 * 0.1964
    t = np.linspace(0, 3, 31)
    ref = pref * (np.exp(c.omega_q * t) - np.exp(c.omega * t))
    assert np.allclose(rep.envelope(t), ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("which,kw", [("M0", {}), ("M3", {"order": 2}), ("M4", {"order": 2, "memory_length": 0.5}),
                                      ("M5", {"order": 2, "cutoff": 0.5}), ("M6", {"order": 2})])
def test_bounds_vanish_at_zero(d3, which, kw):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    assert memory_bound(d3, c, which, **kw).envelope(np.array([0.0]))[0] == 0.0


def test_m3_closed_form(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    T = 2.0
    rep = memory_bound(d3, c, "M3", order=3, horizon=T, norm_form="product")
    al = alpha_ratios(d3, 3)
    a1 = 1.0 if c.omega <= c.omega_q else math.exp(T * (c.omega - c.omega_q))
    a2 = max(1.0, math.exp(T * c.omega_q))
    ref = a1 * a2 * rep.c1 * np.prod(al) * T ** 4 / 24
    assert abs(rep.envelope(np.array([T]))[0] - ref) < 1e-12 * ref


def test_m3_monotone_in_order(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    al = alpha_ratios(d3, 6)
    T = 1.0
    assert np.all(al < (np.arange(1, 7) + 1) / T)
    rep = memory_bound(d3, c, "M3", order=1, horizon=T, alpha=al, norm_form="product")
    env = [rep.envelope(np.array([T]), p)[0] for p in range(1, 6)]
    assert all(b < a for a, b in zip(env, env[1:]))


def test_insufficient_order(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    with pytest.raises(InsufficientOrder):
        memory_bound(d3, c, "M3", order=3, alpha=np.array([0.5]))


def test_branch_continuity():
    t = np.linspace(0.0, 4.0, 17)
    for x in (-1.0, 0.3, 1.2):
        lim = t * np.exp(t * x)
        assert np.max(np.abs(exp_difference(x, x, t) - lim)) <= 1e-9
        assert np.max(np.abs(exp_difference(x + 1e-12, x, t) - lim)) <= 1e-9


def test_branch_continuity_envelopes(d3):
    base = SemigroupConstants(1.0, 0.7, 1.0, 0.7)
    near = SemigroupConstants(1.0, 0.7, 1.0, 0.7 + 1e-11)
    t = np.linspace(0.0, 3.0, 13)
    for which, kw in [("M0", {}), ("M1", {}), ("M2", {"memory_length": 0.5}),
                      ("M5", {"order": 2, "cutoff": 0.4})]:
        a = memory_bound(d3, base, which, **kw).envelope(t)
        b = memory_bound(d3, near, which, **kw).envelope(t)
        assert np.max(np.abs(a - b)) <= 1e-9


def test_f_p_quadrature():
    for wq in (-0.8, 0.0, 1.16, 12.0):
        for p in (1, 2, 4):
            for t in (0.3, 2.0, 5.0):
                ref = quad(lambda s: (t - s) ** (p - 1) / math.factorial(p - 1) * math.exp(s * wq),
                           0, t, epsabs=0, epsrel=1e-13)[0]
                assert abs(f_p(wq, np.array([t]), p)[0] - ref) <= 1e-11 * max(1.0, abs(ref))


def test_predicates_examples():
    c = SemigroupConstants(1.0, 0.5, 1.0, 1.0)
    assert convergence_predicates([0.5, 0.5], 1.0, c, 1.0).uniform_h
    assert not convergence_predicates([10.0, 10.0], 1.0, c, 1.0).uniform_h


def test_predicates_asymptotic_order():
    c = SemigroupConstants(1.0, 0.5, 1.0, 1.0)
    T, C, delta = 1.0, 3.0, 1e-4
    rep = convergence_predicates([C, C], T, c, 2.0, delta=delta)
    c2 = rep.c2
    p = rep.asymptotic_order
    val = lambda q: c2 * T * (C * T) ** q / math.factorial(q + 1)
    assert val(p) <= delta and val(p - 1) > delta


def test_predicates_bands_keep_bounds_below_delta(d3):
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    al = alpha_ratios(d3, 3)
    T, delta = 3.0, 1e-2
    rep = convergence_predicates(al, T, c, memory_bound(d3, c, "M0").c1, delta=delta)
    for p in range(1, 4):
        m4 = memory_bound(d3, c, "M4", order=p, horizon=T, memory_length=rep.type1_min_band[p - 1],
                          alpha=al, norm_form="product")
        assert m4.envelope(np.array([T]))[0] <= delta * (1 + 1e-9)
        cut = min(rep.type2_max_cutoff[p - 1], T)
        m5 = memory_bound(d3, c, "M5", order=p, cutoff=cut, alpha=al, norm_form="product")
        assert m5.envelope(np.array([T]))[0] <= delta * (1 + 1e-9)


def test_oracle_rotation():
    d = decompose(linear(ROT), 1.0, [1.0])
    t = np.linspace(0.0, 10.0, 101)
    w = exact_memory_oracle(d, t).values[:, 0]
    assert np.max(np.abs(w + np.sin(t))) <= 1e-8


def test_oracle_diagonal_zero():
    d = decompose(linear(np.diag([-1.0, -2.0, -3.0])), 1.0)
    assert np.all(exact_memory_oracle(d, np.linspace(0, 2, 11)).values == 0.0)


def test_oracle_matches_closed_form(d3):
    t = np.linspace(0.0, 3.0, 61)
    w = exact_memory_oracle(d3, t).values[:, 0]
    assert np.max(np.abs(w - exact_memory_closed_form(d3, t))) <= 1e-11


def test_oracle_full_band(d3):
    t = np.linspace(0.0, 3.0, 31)
    full = exact_memory_oracle(d3, t).values[:, 0]
    band = exact_memory_oracle(d3, t, lambda s: (np.maximum(0.0, s - s), s)).values[:, 0]
    assert np.array_equal(full, band)


@pytest.mark.parametrize("name,x10", [("Linear3D", 1.0), ("Linear100D", 3.0)])
def test_theorem_consistency(name, x10):
    from mzmem.closures import ClosureSpec, build_linear_hierarchy
    s = make_registry_system(name)
    d = decompose(s, x10)
    c = semigroup_constants(s, None, d) if name == "Linear3D" else v_restricted_constants(d)
    t = np.arange(301) * 0.01
    w = exact_memory_oracle(d, t).values[:, 0]
    assert np.all(np.abs(w) <= memory_bound(d, c, "M0").envelope(t) + 1e-14)
    for p in range(1, 5):
        tr = build_linear_hierarchy(d, ClosureSpec(p), forcing="exact").solve(3.0, 1e-3, 10)
        err = np.abs(w - tr.values[:, 1])
        env = memory_bound(d, c, "M3", order=p).envelope(t)
        assert np.all(err <= env + 1e-10)
