import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from mzmem.closures import (ClosureSpec, Monomial, build_linear_hierarchy, build_lorenz63_tmodel,
                            build_lorenz96_tmodel, dyson_reconstruction,
                            integrate_with_banded_closure, mean_field_project, solve_hierarchy)
from mzmem.dynsys import DynamicalSystem, make_registry_system
from mzmem.errors import InvalidConfig, Unsupported
from mzmem.mzlinear import (alpha_ratios, decompose, exact_memory_oracle, memory_bound,
                            semigroup_constants)
from mzmem.errors import DegenerateRatio


def linear(A):
    A = np.asarray(A, dtype=float)
    return DynamicalSystem(A.shape[0], lambda x: x @ A.T, linear_matrix=A)


@pytest.fixture(scope="module")
def d3():
    return decompose(make_registry_system("Linear3D"), 1.0)


def exact_mean(d, t):
    return np.array([expm(s * d.matrix)[0, 0] for s in t]) * d.x1_0


def test_hm2_streaming_coefficients(d3):
    hs = build_linear_hierarchy(d3, ClosureSpec(2))
    assert np.allclose([d3.a11, hs.coefficients[0], hs.coefficients[1]],
                       [-0.4560, 0.0586, -0.0192], atol=1e-3)
    assert hs.labels == ["E[x1|x1(0)]", "w_0", "w_1"]
    assert np.array_equal(hs.y0, [1.0, 0.0, 0.0])


def test_order_zero_is_markovian(d3):
    tr = solve_hierarchy(d3, ClosureSpec(0), 2.0, dt=1e-3, record_every=100)
    assert np.allclose(tr.values[:, 0], np.exp(d3.a11 * tr.t), rtol=1e-12)


def test_diagonal_any_order():
    d = decompose(linear(np.diag([-0.3, -1.0, -2.0])), 2.0)
    tr = solve_hierarchy(d, ClosureSpec(3), 2.0, dt=1e-3, record_every=100)
    assert np.allclose(tr.values[:, 0], 2.0 * np.exp(-0.3 * tr.t), rtol=1e-12)
    assert np.all(tr.values[:, 1:] == 0.0)


def test_tmodel_order_zero_is_classical(d3):
    tr = solve_hierarchy(d3, ClosureSpec(0, "TModel"), 2.0, dt=1e-3, record_every=100)
    c = d3.b @ d3.a
    ref = np.exp(d3.a11 * tr.t + 0.5 * c * tr.t ** 2)
    assert np.allclose(tr.values[:, 0], ref, rtol=1e-11)


def test_exact_termination():
    d = decompose(linear([[0.0, 1.0], [-1.0, 0.0]]), 1.0, [1.0])
    with pytest.raises(DegenerateRatio) as err:
        alpha_ratios(d, 2)
    k = err.value.order
    tr = solve_hierarchy(d, ClosureSpec(k), 6.0, dt=1e-3, record_every=10)
    assert np.max(np.abs(tr.values[:, 0] - np.cos(tr.t))) <= 1e-8


def test_nesting_linear3d(d3):
    t = np.arange(301) * 0.01
    ex = exact_mean(d3, t)
    sup = [np.max(np.abs(solve_hierarchy(d3, ClosureSpec(n), 3.0, dt=1e-3, record_every=10)
                         .values[:, 0] - ex)) for n in range(4)]
    assert all(b < a for a, b in zip(sup, sup[1:]))


@pytest.mark.parametrize("terminal", ["Truncate", "TModel"])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_reconstruction_identity(d3, order, terminal):
    tr = solve_hierarchy(d3, ClosureSpec(order, terminal), 3.0, dt=1e-3)
    w = dyson_reconstruction(d3, tr, order, terminal, stride=100)
    assert np.max(np.abs(w - tr.values[::100, 1])) <= 1e-10


def test_type1_full_band_is_exact(d3):
    t = np.arange(61) * 0.05
    tr = integrate_with_banded_closure(d3, ClosureSpec(2, "TypeI", 10.0), t, dt=1e-3)
    assert np.max(np.abs(tr.values[:, 0] - exact_mean(d3, t))) <= 1e-9


def test_type1_empty_band_is_truncation(d3):
    t = np.arange(61) * 0.05
    a = integrate_with_banded_closure(d3, ClosureSpec(2, "TypeI", 0.0), t, dt=1e-3)
    b = solve_hierarchy(d3, ClosureSpec(2), 3.0, dt=1e-3, record_every=50)
    assert np.max(np.abs(a.values - b.values)) <= 1e-14


@pytest.mark.parametrize("cutoff", [0.0, 0.5, 1.5])
def test_type2_obeys_m5(d3, cutoff):
    t = np.arange(61) * 0.05
    w = exact_memory_oracle(d3, t).values[:, 0]
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    for p in (1, 2):
        tr = integrate_with_banded_closure(d3, ClosureSpec(p, "TypeII", cutoff), t, dt=1e-3,
                                           forcing="exact")
        err = np.abs(tr.values[:, 1] - w)
        env = memory_bound(d3, c, "M5", order=p, cutoff=cutoff).envelope(t)
        assert np.all(err <= env + 1e-9)


def test_type1_obeys_m4(d3):
    t = np.arange(61) * 0.05
    w = exact_memory_oracle(d3, t).values[:, 0]
    c = semigroup_constants(make_registry_system("Linear3D"), None, d3)
    for band in (0.5, 1.0):
        tr = integrate_with_banded_closure(d3, ClosureSpec(2, "TypeI", band), t, dt=1e-3,
                                           forcing="exact")
        err = np.abs(tr.values[:, 1] - w)
        env = memory_bound(d3, c, "M4", order=2, memory_length=band).envelope(t)
        assert np.all(err <= env + 1e-9)


def test_banded_spec_validation():
    with pytest.raises(InvalidConfig):
        ClosureSpec(1, "TypeI")
    with pytest.raises(InvalidConfig):
        ClosureSpec(-1)


def test_mean_field_examples():
    assert mean_field_project((2, 1), [1.5, -2.0]) == 1.5 ** 2 * -2.0
    assert mean_field_project((1,), [0.7]) == 0.7
    assert mean_field_project(Monomial(1.0, (1, 1)), [2.0, 3.0]) == 6.0
    assert mean_field_project([Monomial(2.0, (1, 0)), Monomial(-1.0, (0, 2))], [1.0, 3.0]) == -7.0
    with pytest.raises(Unsupported):
        mean_field_project("x1*x2", [1.0, 1.0])
    with pytest.raises(Unsupported):
        mean_field_project(Monomial(1.0, (-1, 0)), [1.0, 1.0])


def test_lorenz63_tmodel_rhs():
    hs = build_lorenz63_tmodel(10.0, 28.0, 8.0 / 3.0, x0=(1.0, 2.0))
    y = np.array([1.5, -0.5])
    assert np.allclose(hs.rhs(0.0, y), [10.0 * (-0.5 - 1.5), -(-0.5) + 28.0 * 1.5])
    assert np.allclose(hs.rhs(2.0, y), [10.0 * (-2.0), 0.5 + 42.0 - 2.0 * 1.5 ** 2 * -0.5])
    printed = build_lorenz63_tmodel(10.0, 28.0, 8.0 / 3.0, sign="printed")
    assert np.allclose(printed.rhs(0.0, y)[0], 10.0 * 2.0)


def test_lorenz96_tmodel_rhs():
    hs = build_lorenz96_tmodel(5.0, x0=(1.0, 1.0))
    assert np.allclose(hs.rhs(0.0, hs.y0), [5.0, 4.0])
    y = np.array([2.0, 0.5])
    assert np.allclose(hs.rhs(1.5, y)[1], -0.5 + 5.0 + 1.5 * (5.0 * 2.0 - 4.0 * 0.5))
    printed = build_lorenz96_tmodel(5.0, sign="printed")
    assert np.allclose(printed.rhs(1.5, y)[1], -0.5 + 5.0 + 1.5 * (4.0 * 0.5 - 5.0 * 2.0))


def test_lorenz96_fixed_point():
    tr = build_lorenz96_tmodel(0.0, x0=(0.0, 0.0)).solve(2.0, 1e-2)
    assert np.all(tr.values == 0.0)


def test_lorenz_order_one_matches_direct_ode():
    hs = build_lorenz63_tmodel(10.0, 0.5, 8.0 / 3.0, order=1)
    b, s, r = 8.0 / 3.0, 10.0, 0.5

    def f(t, y):
        x1, x2, w = y
        return [s * (x2 - x1), -x2 + r * x1 + w,
                -x1 ** 2 * x2 + t * ((b + s) * x1 ** 2 * x2 - s * x1 * x2 ** 2 + s * x1)]

    ref = solve_ivp(f, (0, 2), [1.0, 1.0, 0.0], rtol=1e-11, atol=1e-12, dense_output=True)
    tr = hs.solve(2.0, 1e-3, 100)
    assert np.max(np.abs(tr.values - ref.sol(tr.t).T)) <= 1e-8
