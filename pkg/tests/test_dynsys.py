import numpy as np
import pytest
from scipy.linalg import expm

from mzmem.dynsys import (DynamicalSystem, WeightDensity, div_sigma, gibbs_weight,
                          make_registry_system, standard_normal_weight)
from mzmem.errors import InvalidConfig
from mzmem.odeint import rk4


def _linear3d_reference():
    B = np.diag([-1 / 8, -2 / 3, -1 / 2])
    C = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    return expm(C) @ B @ expm(-C)


def test_linear3d_matrix():
    s = make_registry_system("Linear3D")
    A = s.linear_matrix
    assert np.allclose(A, _linear3d_reference(), atol=1e-14)
    assert abs(np.trace(A) + 1.2916666666666667) < 1e-12
    assert np.allclose(np.sort(np.linalg.eigvals(A).real), [-2 / 3, -1 / 2, -1 / 8], atol=1e-12)


def test_chain_single_oscillator():
    s = make_registry_system("HarmonicChain", N=1)
    assert np.array_equal(s.linear_matrix, [[0.0, -2.0], [1.0, 0.0]])


def test_chain_block_layout():
    N = 4
    A = make_registry_system("HarmonicChain", N=N).linear_matrix
    # dp1/dt = q2 - 2 q1, dq1/dt = p1
    assert A[0, N] == -2.0 and A[0, N + 1] == 1.0
    assert A[N, 0] == 1.0
    assert np.all(A[:N, :N] == 0) and np.all(A[N:, N:] == 0)


def test_lorenz63_rhs():
    s = make_registry_system("Lorenz63", sigma=10.0, r=28.0, beta=8.0 / 3.0)
    assert np.allclose(s.rhs(np.array([1.0, 1.0, 1.0])), [0.0, 26.0, 1.0 - 8.0 / 3.0])


def test_lorenz96_rhs():
    s = make_registry_system("Lorenz96", F=5.0, N=6)
    x = np.arange(1.0, 7.0)
    ref = np.empty(6)
    ref[0] = -x[0] + x[0] * x[1] + 5
    ref[1] = -x[1] + x[0] * x[2] + 5
    for i in range(2, 5):
        ref[i] = -x[i] + (x[i + 1] - x[i - 2]) * x[i - 1] + 5
    ref[5] = -x[5] - x[3] * x[4] + 5
    assert np.allclose(s.rhs(x), ref)


@pytest.mark.parametrize("name", ["Linear3D", "Linear100D", "HarmonicChain"])
def test_linear_rhs_matches_matrix(name):
    s = make_registry_system(name)
    X = np.random.default_rng(0).standard_normal((100, s.dim))
    ref = X @ s.linear_matrix.T
    assert np.max(np.abs(s.rhs(X) - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_div_linear_normal_weight_at_origin():
    s = make_registry_system("Linear3D")
    val = div_sigma(s, standard_normal_weight(), np.zeros(3))
    assert abs(val + 1.2916666666666667) < 1e-12


def test_div_linear_normal_weight_formula():
    # Div = tr(A) - x^T A x, checked against the finite-difference path
    s = make_registry_system("Linear3D")
    x = np.array([0.3, -1.2, 0.7])
    A = s.linear_matrix
    fd_sys = DynamicalSystem(3, s.rhs)
    expected = np.trace(A) - x @ A @ x
    assert abs(div_sigma(s, standard_normal_weight(), x) - expected) < 1e-12
    assert abs(div_sigma(fd_sys, standard_normal_weight(), x) - expected) < 1e-8


def test_div_uniform_weight():
    s = DynamicalSystem(1, lambda x: -np.asarray(x))
    flat = WeightDensity(lambda x: 0.0, lambda x: np.zeros_like(np.asarray(x, float)), "Uniform")
    for x in (-3.0, 0.0, 2.5):
        assert abs(div_sigma(s, flat, np.array([x])) + 1.0) < 1e-9


@pytest.mark.parametrize("name", ["HarmonicChain", "Hald"])
def test_hamiltonian_divergence_free(name):
    s = make_registry_system(name, N=5) if name == "HarmonicChain" else make_registry_system(name)
    w = gibbs_weight(s.hamiltonian, s.grad_hamiltonian, 1.0)
    X = np.random.default_rng(1).standard_normal((100, s.dim))
    assert max(abs(div_sigma(s, w, x)) for x in X) <= 1e-8


def test_grad_log_density_matches_fd():
    s = make_registry_system("Hald")
    w = gibbs_weight(s.hamiltonian, s.grad_hamiltonian, 1.3)
    for x in np.random.default_rng(2).standard_normal((10, 4)):
        g = w.grad_log_density(x)
        fd = np.array([(w.log_density(x + 1e-6 * e) - w.log_density(x - 1e-6 * e)) / 2e-6
                       for e in np.eye(4)])
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_hald_energy_conservation():
    s = make_registry_system("Hald")
    x0 = np.array([0.8, -0.3, 1.1, 0.5])
    tr = rk4(s, x0, 0.0, 20.0, 1e-3, record_every=100)
    H = s.hamiltonian(tr.values)
    assert np.max(np.abs(H - H[0])) <= 1e-6


@pytest.mark.parametrize("name,params", [("Nope", {}), ("Lorenz96", {"N": 2}),
                                         ("HarmonicChain", {"N": 0}), ("Linear3D", {"x": 1})])
def test_invalid_registry(name, params):
    with pytest.raises(InvalidConfig):
        make_registry_system(name, **params)
