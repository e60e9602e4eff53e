"""Autonomous dynamical systems, weight densities and the benchmark registry.

All vector fields act on the last axis, so a batch of states with shape
``(n, dim)`` is advanced in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import InvalidConfig, NumericalFailure

__all__ = [
    "DynamicalSystem", "WeightDensity", "div_sigma", "make_registry_system",
    "standard_normal_weight", "gibbs_weight", "dirac_times_normal_weight",
    "REGISTRY_NAMES",
]

REGISTRY_NAMES = ("Linear3D", "Linear100D", "Lorenz63", "Lorenz96", "HarmonicChain", "Hald")


@dataclass(frozen=True)
class DynamicalSystem:
    """Autonomous system ``dx/dt = F(x)``.

    Parameters
    ----------
    dim : int
        State dimension.
    rhs : callable
        ``F(x)`` acting on the last axis of ``x``.
    linear_matrix : ndarray, optional
        ``A`` when ``F(x) = A x``.
    label : str
    divergence : callable, optional
        Closed-form Euclidean divergence of ``F``.
    hamiltonian : callable, optional
        Energy function for Hamiltonian systems.
    grad_hamiltonian : callable, optional
    params : dict
        Construction parameters, kept for metadata.
    """

    dim: int
    rhs: Callable
    linear_matrix: Optional[np.ndarray] = None
    label: str = ""
    divergence: Optional[Callable] = None
    hamiltonian: Optional[Callable] = None
    grad_hamiltonian: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidConfig("dim must be >= 1")
        if self.linear_matrix is not None:
            A = np.asarray(self.linear_matrix, dtype=float)
            if A.shape != (self.dim, self.dim):
                raise InvalidConfig("linear_matrix shape does not match dim")
            A.setflags(write=False)
            object.__setattr__(self, "linear_matrix", A)

    def __call__(self, t, x):
        # (t, x) signature for the integrator
        return self.rhs(x)

    @property
    def is_linear(self) -> bool:
        return self.linear_matrix is not None


@dataclass(frozen=True)
class WeightDensity:
    """Unnormalized weight ``sigma`` defining the inner product.

    ``kind`` is one of ``"StandardNormalProduct"``, ``"GibbsCanonical"`` or
    ``"DiracTimesNormal"``.
    """

    log_density: Callable
    grad_log_density: Callable
    kind: str
    params: dict = field(default_factory=dict)


def standard_normal_weight() -> WeightDensity:
    return WeightDensity(
        log_density=lambda x: -0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        grad_log_density=lambda x: -np.asarray(x, dtype=float),
        kind="StandardNormalProduct",
    )


def gibbs_weight(hamiltonian: Callable, grad_hamiltonian: Callable, beta: float = 1.0) -> WeightDensity:
    if beta <= 0:
        raise InvalidConfig("beta must be positive")
    return WeightDensity(
        log_density=lambda x: -beta * hamiltonian(x),
        grad_log_density=lambda x: -beta * grad_hamiltonian(x),
        kind="GibbsCanonical",
        params={"beta": beta},
    )


def dirac_times_normal_weight(resolved: dict, dim: int) -> WeightDensity:
    """Product of a point mass on resolved coordinates and N(0,1) on the rest.

    Only the smooth factor enters the log density; its gradient vanishes on the
    resolved coordinates.
    """
    mask = np.ones(dim, dtype=bool)
    mask[list(resolved)] = False

    def logd(x):
        return -0.5 * np.sum(np.asarray(x)[..., mask] ** 2, axis=-1)

    def grad(x):
        return -np.asarray(x, dtype=float) * mask

    return WeightDensity(logd, grad, "DiracTimesNormal", {"resolved": dict(resolved)})


def _fd_divergence(rhs: Callable, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i in range(x.size):
        h = 1e-5 * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        total += (rhs(x + e)[i] - rhs(x - e)[i]) / (2 * h)
    return total


def div_sigma(system: DynamicalSystem, weight: WeightDensity, x) -> float:
    """Weighted divergence ``div F + F . grad log sigma`` at ``x``.

    Uses the closed-form divergence when the system provides one, otherwise
    central finite differences with step ``1e-5 * max(1, |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    if system.divergence is not None:
        div = float(system.divergence(x))
    else:
        div = _fd_divergence(system.rhs, x)
    val = div + float(np.dot(system.rhs(x), weight.grad_log_density(x)))
    if not np.isfinite(val):
        raise NumericalFailure("weighted divergence is not finite")
    return val


# registry

def _linear(A: np.ndarray, label: str, **params) -> DynamicalSystem:
    A = np.array(A, dtype=float)
    tr = float(np.trace(A))
    return DynamicalSystem(
        dim=A.shape[0], rhs=lambda x: np.asarray(x) @ A.T, linear_matrix=A,
        label=label, divergence=lambda x: tr, params=params,
    )


def _skew_tridiagonal(n: int) -> np.ndarray:
    return np.eye(n, k=1) - np.eye(n, k=-1)


def linear3d_matrix() -> np.ndarray:
    """Negative-definite 3x3 benchmark matrix ``e^C B e^{-C}``."""
    B = np.diag([-1 / 8, -2 / 3, -1 / 2])
    C = _skew_tridiagonal(3)
    return expm(C) @ B @ expm(-C)


def linear100d_matrix(N: int = 100) -> np.ndarray:
    """High-dimensional benchmark with an alternating first row.

    First row ``(-1)^j`` for ``j = 1..N``, first column tail of ones and lower
    block ``e^C diag(-j/(j+7)) e^{-C}``.
    """
    if N < 3:
        raise InvalidConfig("N must be >= 3")
    lam = np.diag([-j / (j + 7) for j in range(1, N)])
    C = _skew_tridiagonal(N - 1)
    A = np.empty((N, N))
    A[0, :] = [(-1.0) ** j for j in range(1, N + 1)]
    A[1:, 0] = 1.0
    A[1:, 1:] = expm(C) @ lam @ expm(-C)
    return A


def chain_matrix(N: int, m: float = 1.0, k: float = 1.0) -> np.ndarray:
    """Block matrix of a fixed-end harmonic chain in ``(p, q)`` ordering."""
    if N < 1:
        raise InvalidConfig("N must be >= 1")
    if m <= 0 or k <= 0:
        raise InvalidConfig("m and k must be positive")
    adj = np.eye(N, k=1) + np.eye(N, k=-1)
    deg = 2.0 * np.eye(N)
    A = np.zeros((2 * N, 2 * N))
    A[:N, N:] = k * (adj - deg)
    A[N:, :N] = np.eye(N) / m
    return A


def _chain(N=100, m=1.0, k=1.0) -> DynamicalSystem:
    A = chain_matrix(N, m, k)
    K = -A[:N, N:]

    def ham(x):
        x = np.asarray(x)
        p, q = x[..., :N], x[..., N:]
        return 0.5 * np.sum(p * p, axis=-1) / m + 0.5 * np.einsum("...i,ij,...j->...", q, K, q)

    def grad(x):
        x = np.asarray(x)
        return np.concatenate([x[..., :N] / m, x[..., N:] @ K], axis=-1)

    sys_ = _linear(A, f"HarmonicChain(N={N})", N=N, m=m, k=k)
    return DynamicalSystem(sys_.dim, sys_.rhs, A, sys_.label, sys_.divergence, ham, grad, sys_.params)


def _lorenz63(sigma=10.0, r=28.0, beta=8.0 / 3.0) -> DynamicalSystem:
    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([sigma * (x2 - x1), x1 * (r - x3) - x2, x1 * x2 - beta * x3], axis=-1)

    return DynamicalSystem(3, f, label=f"Lorenz63(sigma={sigma}, r={r}, beta={beta})",
                           divergence=lambda x: -sigma - 1.0 - beta,
                           params={"sigma": sigma, "r": r, "beta": beta})


def _lorenz96(F=5.0, N=100, last_sign=-1.0) -> DynamicalSystem:
    """Modified Lorenz-96 with open ends.

    ``x1' = -x1 + x1 x2 + F``; interior ``xi' = -xi + (x_{i+1} - x_{i-2}) x_{i-1} + F``
    with absent neighbours set to zero; ``xN' = last_sign * xN - x_{N-2} x_{N-1} + F``.
    """
    if N < 4:
        raise InvalidConfig("Lorenz96 needs N >= 4")

    def f(x):
        x = np.asarray(x, dtype=float)
        d = np.empty_like(x)
        d[..., 0] = -x[..., 0] + x[..., 0] * x[..., 1] + F
        d[..., 1] = -x[..., 1] + x[..., 0] * x[..., 2] + F
        d[..., 2:N - 1] = (-x[..., 2:N - 1]
                           + (x[..., 3:N] - x[..., 0:N - 3]) * x[..., 1:N - 2] + F)
        d[..., N - 1] = last_sign * x[..., N - 1] - x[..., N - 3] * x[..., N - 2] + F
        return d

    def div(x):
        x = np.asarray(x, dtype=float)
        return -(N - 1) + last_sign + x[..., 1]

    return DynamicalSystem(N, f, label=f"Lorenz96(F={F}, N={N})", divergence=div,
                           params={"F": F, "N": N, "last_sign": last_sign})


def _hald() -> DynamicalSystem:
    def ham(x):
        x = np.asarray(x, dtype=float)
        q1, p1, q2, p2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return 0.5 * (q1 ** 2 + p1 ** 2 + q2 ** 2 + p2 ** 2 + q1 ** 2 * q2 ** 2)

    def grad(x):
        x = np.asarray(x, dtype=float)
        q1, p1, q2, p2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return np.stack([q1 * (1 + q2 ** 2), p1, q2 * (1 + q1 ** 2), p2], axis=-1)

    def f(x):
        x = np.asarray(x, dtype=float)
        q1, p1, q2, p2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        return np.stack([p1, -q1 * (1 + q2 ** 2), p2, -q2 * (1 + q1 ** 2)], axis=-1)

    # state ordering (q1, p1, q2, p2)
    return DynamicalSystem(4, f, label="Hald", divergence=lambda x: 0.0,
                           hamiltonian=ham, grad_hamiltonian=grad)


def make_registry_system(name: str, **params) -> DynamicalSystem:
    """Build one of the benchmark systems by name.

    Parameters
    ----------
    name : str
        One of ``Linear3D``, ``Linear100D``, ``Lorenz63``, ``Lorenz96``,
        ``HarmonicChain``, ``Hald``.
    **params
        ``Lorenz63``: sigma, r, beta. ``Lorenz96``: F, N, last_sign.
        ``HarmonicChain``: N, m, k. ``Linear100D``: N.

    Raises
    ------
    InvalidConfig
        Unknown name or parameters out of range.
    """
    try:
        if name == "Linear3D":
            if params:
                raise TypeError("Linear3D takes no parameters")
            return _linear(linear3d_matrix(), "Linear3D")
        if name == "Linear100D":
            N = int(params.pop("N", 100))
            if params:
                raise TypeError(f"unexpected parameters {sorted(params)}")
            return _linear(linear100d_matrix(N), f"Linear100D(N={N})", N=N)
        if name == "Lorenz63":
            return _lorenz63(**params)
        if name == "Lorenz96":
            return _lorenz96(**params)
        if name == "HarmonicChain":
            return _chain(**params)
        if name == "Hald":
            if params:
                raise TypeError("Hald takes no parameters")
            return _hald()
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None
    raise InvalidConfig(f"unknown system {name!r}; valid: {', '.join(REGISTRY_NAMES)}")
