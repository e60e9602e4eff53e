"""Memory-integral algebra and a-priori bounds for linear systems.

For ``dx/dt = A x`` with the observable ``x1`` and the conditional expectation
``P`` given ``x1(0)``, the Liouvillian restricted to linear observables acts on
coefficient vectors as ``A^T``. ``P`` keeps the first coefficient and
``Q = I - P`` the rest. Splitting

    A = [[a11, a^T],
         [b,   M11]]

gives the streaming coefficients ``L(QL)^n x1 ~ (b^T (M11^T)^(n-1) a, (M11^T)^n a)``
that drive the memory hierarchy and enter every error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .dynsys import DynamicalSystem, WeightDensity
from .errors import (DegenerateRatio, InsufficientOrder, InvalidConfig,
                     NeedsUserBound, NotLinear, NumericalFailure)
from .odeint import Trajectory

__all__ = [
    "LinearMZDecomposition", "SemigroupConstants", "BoundReport", "ConvergenceReport",
    "decompose", "liouvillian_coefficient", "norm_LQLn", "alpha_ratios",
    "semigroup_constants", "v_restricted_constants", "omega_q_finite_rank_bounds",
    "memory_bound", "convergence_predicates", "exact_memory_oracle",
    "exact_memory_closed_form", "MemoryKernelEvaluator",
]


@dataclass(frozen=True)
class LinearMZDecomposition:
    """Block split of a linear system seen from the observable ``x1``.

    Attributes
    ----------
    a11 : float
    a : ndarray, shape (N-1,)
        Tail of the first row of ``A``.
    b : ndarray, shape (N-1,)
        Tail of the first column of ``A``.
    m11 : ndarray, shape (N-1, N-1)
    var : ndarray, shape (N-1,)
        Second moments of the unresolved initial values.
    x1_0 : float
        Resolved initial value.
    """

    a11: float
    a: np.ndarray
    b: np.ndarray
    m11: np.ndarray
    var: np.ndarray
    x1_0: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.a.size + 1

    @property
    def matrix(self) -> np.ndarray:
        A = np.empty((self.n, self.n))
        A[0, 0] = self.a11
        A[0, 1:] = self.a
        A[1:, 0] = self.b
        A[1:, 1:] = self.m11
        return A

    def krylov(self, n: int) -> np.ndarray:
        """Rows ``(M11^T)^k a`` for ``k = 0..n``."""
        rows = self._cache.setdefault("krylov", [np.array(self.a, dtype=float)])
        mt = self.m11.T
        while len(rows) <= n:
            rows.append(mt @ rows[-1])
        return np.array(rows[: n + 1])


def decompose(system: DynamicalSystem, x1_0: float, var=None) -> LinearMZDecomposition:
    """Split a linear system into ``(a11, a, b, M11)``.

    Parameters
    ----------
    system : DynamicalSystem
        Must carry ``linear_matrix``.
    x1_0 : float
        Deterministic initial value of the observable.
    var : array_like, optional
        Second moments of ``x2(0), ..., xN(0)``. Defaults to ones.

    Raises
    ------
    NotLinear
        If the system has no matrix.
    InvalidConfig
        If a variance is not strictly positive.
    """
    if system.linear_matrix is None:
        raise NotLinear(f"{system.label or 'system'} has no linear_matrix")
    A = np.asarray(system.linear_matrix, dtype=float)
    n = A.shape[0]
    var = np.ones(n - 1) if var is None else np.broadcast_to(np.asarray(var, float), (n - 1,)).copy()
    if np.any(var <= 0):
        raise InvalidConfig("unresolved variances must be positive")
    return LinearMZDecomposition(float(A[0, 0]), A[0, 1:].copy(), A[1:, 0].copy(),
                                 A[1:, 1:].copy(), var, float(x1_0))


def liouvillian_coefficient(d: LinearMZDecomposition, n: int) -> float:
    """``a11`` for ``n = 0``, else ``b^T (M11^T)^(n-1) a``."""
    if n < 0:
        raise InvalidConfig("n must be non-negative")
    if n == 0:
        return d.a11
    return float(d.b @ d.krylov(n - 1)[n - 1])


def norm_LQLn(d: LinearMZDecomposition, n: int) -> float:
    """Weighted L2 norm of ``L(QL)^n x1`` at the initial time.

    ``sqrt(c^2 x1_0^2 + sum_i var_i v_i^2)`` with ``c = b^T (M11^T)^(n-1) a`` and
    ``v = (M11^T)^n a``. For ``n = 0`` the observable is ``L x1 ~ (a11, a)``.
    """
    if n < 0:
        raise InvalidConfig("n must be non-negative")
    v = d.krylov(n)[n]
    c = d.a11 if n == 0 else liouvillian_coefficient(d, n)
    return float(math.sqrt(c * c * d.x1_0 ** 2 + float(np.sum(d.var * v * v))))


def alpha_ratios(d: LinearMZDecomposition, n_max: int) -> np.ndarray:
    """Ratios ``alpha_j = norm(j+1) / norm(j)`` for ``j = 1..n_max``.

    Raises
    ------
    DegenerateRatio
        When ``norm(j)`` or ``norm(j+1)`` vanishes, i.e. the hierarchy
        terminates exactly and the order-``j`` model is exact. The exception
        carries the first offending ``j``.
    """
    norms = [norm_LQLn(d, j) for j in range(1, n_max + 2)]
    scale = max(norm_LQLn(d, 0), norms[0], np.finfo(float).tiny)
    out = np.empty(n_max)
    for j in range(1, n_max + 1):
        if norms[j - 1] <= 1e-14 * scale or norms[j] <= 1e-14 * scale:
            raise DegenerateRatio(f"norm of L(QL)^{j} x1 vanishes: hierarchy terminates exactly",
                                  order=j)
        out[j - 1] = norms[j] / norms[j - 1]
    return out


# semigroup constants

@dataclass(frozen=True)
class SemigroupConstants:
    """Growth constants ``|e^{tL}| <= M e^{t omega}``, ``|e^{tLQ}| <= M_Q e^{t omega_Q}``."""

    m_l: float
    omega: float
    m_q: float
    omega_q: float
    provenance: str = "ComputedAbscissa"

    def __post_init__(self):
        if self.m_l < 1 or self.m_q < 1:
            raise InvalidConfig("M and M_Q must be >= 1")
        if self.provenance not in ("ComputedAbscissa", "PerturbationBound", "UserSupplied"):
            raise InvalidConfig(f"unknown provenance {self.provenance!r}")


def _lp_norm(d: LinearMZDecomposition) -> float:
    if d.x1_0 == 0:
        raise InvalidConfig("x1(0) = 0 leaves the perturbation bound undefined")
    return math.sqrt(d.a11 ** 2 + float(np.sum(d.a ** 2 * d.var)) / d.x1_0 ** 2)


def semigroup_constants(system: DynamicalSystem, weight: Optional[WeightDensity],
                        d: LinearMZDecomposition, inf_div: Optional[float] = None) -> SemigroupConstants:
    """Numerical-abscissa constants for a linear system.

    ``omega = -inf(Div)/2``. Under a standard-normal weight
    ``Div(x) = tr(A) - x^T A x`` attains its infimum ``tr(A)`` at the origin
    exactly when the symmetric part of ``A`` is negative semi-definite.
    ``omega_Q = omega + |LP|`` with ``|LP|^2 = a11^2 + sum_i a_i^2 var_i / x1_0^2``.

    Parameters
    ----------
    system, weight, d
        The system, its weight (``None`` means standard normal) and decomposition.
    inf_div : float, optional
        User-supplied infimum of the weighted divergence.

    Raises
    ------
    NeedsUserBound
        If the infimum is not available in closed form.
    InvalidConfig
        If ``x1_0 == 0``.
    """
    if system.linear_matrix is None:
        raise NotLinear("semigroup constants need a linear system")
    A = np.asarray(system.linear_matrix)
    lp = _lp_norm(d)
    if inf_div is not None:
        omega = -0.5 * float(inf_div)
        prov = "UserSupplied"
    else:
        kind = "StandardNormalProduct" if weight is None else weight.kind
        if kind not in ("StandardNormalProduct", "DiracTimesNormal"):
            raise NeedsUserBound(f"no closed-form divergence infimum for weight {kind}")
        sym = 0.5 * (A + A.T)
        lam_max = float(np.linalg.eigvalsh(sym)[-1])
        if lam_max > 1e-12 * max(1.0, float(np.abs(sym).max())):
            raise NeedsUserBound(
                "divergence is unbounded below (symmetric part of A is not negative "
                "semi-definite); supply inf_div or use v_restricted_constants")
        omega = -0.5 * float(np.trace(A))
        prov = "ComputedAbscissa"
    return SemigroupConstants(1.0, omega, 1.0, omega + lp, prov)


def v_restricted_constants(d: LinearMZDecomposition) -> SemigroupConstants:
    """Constants for the semigroup restricted to linear observables.

    Uses the numerical abscissa of ``A^T`` in the norm with weights
    ``diag(x1_0^2, var)`` and the same perturbation bound for ``omega_Q``.
    Valid for any real ``A``, including systems whose divergence is unbounded.
    """
    lp = _lp_norm(d)
    w = np.sqrt(np.concatenate([[d.x1_0 ** 2], d.var]))
    At = d.matrix.T
    S = (w[:, None] * At) / w[None, :]
    mu = float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])
    return SemigroupConstants(1.0, mu, 1.0, mu + lp, "ComputedAbscissa")


def omega_q_finite_rank_bounds(omega: float, norm_plq: float, norm_lp: float) -> tuple:
    """Two upper bounds on the abscissa of ``LQ`` for a finite-rank ``P``.

    Returns ``(0.5 * (sqrt(omega^2 + |PLQ|^2) + omega), omega + |LP|)``; the
    caller takes the smaller.
    """
    if norm_plq < 0 or norm_lp < 0:
        raise InvalidConfig("norms must be non-negative")
    return 0.5 * (math.sqrt(omega * omega + norm_plq * norm_plq) + omega), omega + norm_lp


# envelope helpers

def _phi1(z):
    """``(e^z - 1)/z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-5
    out[big] = np.expm1(z[big]) / z[big]
    zs = z[~big]
    out[~big] = 1.0 + zs / 2.0 + zs * zs / 6.0
    return out


def exp_difference(x: float, y: float, t):
    """``(e^{tx} - e^{ty}) / (x - y)``, continuous across ``x = y`` (limit ``t e^{tx}``)."""
    t = np.asarray(t, dtype=float)
    return t * np.exp(t * y) * _phi1(t * (x - y))


def f_p(omega_q: float, t, p: int):
    """``int_0^t (t-s)^{p-1}/(p-1)! e^{s omega_q} ds``.

    Closed form ``omega_q^{-p} [e^{t omega_q} - sum_{k<p} (t omega_q)^k / k!]``,
    evaluated as ``t^p sum_{k>=0} (t omega_q)^k / (k+p)!`` to avoid cancellation.
    """
    t = np.asarray(t, dtype=float)
    z = t * omega_q
    out = np.empty_like(t)
    small = np.abs(z) < 30.0
    # power series for moderate |z|
    zs = z[small]
    term = np.full_like(zs, 1.0 / math.factorial(p))
    acc = term.copy()
    for k in range(1, 200):
        term = term * zs / (k + p)
        acc += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    out[small] = t[small] ** p * acc
    if np.any(~small):
        zl = z[~small]
        tail = sum(zl ** k / math.factorial(k) for k in range(p))
        out[~small] = (np.exp(zl) - tail) / omega_q ** p
    return out


def _h(delta: float, tp):
    """``int_0^tp e^{s delta} ds``."""
    tp = np.asarray(tp, dtype=float)
    return tp * _phi1(tp * delta)


@dataclass
class BoundReport:
    """Constants and envelope of one memory-error bound.

    ``envelope(t)`` evaluates the bound on an array of times; ``envelope(t, p)``
    re-evaluates it at another order when the bound depends on one.
    """

    constants: SemigroupConstants
    c1: float
    a1: float
    a2: float
    a3: float
    alpha: np.ndarray
    which: str
    order: Optional[int]
    _env: Callable = field(repr=False, default=None)

    def envelope(self, t, p: Optional[int] = None):
        return self._env(np.asarray(t, dtype=float), self.order if p is None else p)

    def to_csv(self, path, t):
        from .odeint import write_csv
        t = np.asarray(t, dtype=float)
        write_csv(path, ["t", "value"], np.column_stack([t, self.envelope(t)]))


def _a1(omega, omega_q, T):
    return np.where(omega <= omega_q, 1.0, np.exp(np.asarray(T, float) * (omega - omega_q)))


def _a2(omega_q, T):
    return np.where(omega_q <= 0, 1.0, np.exp(np.asarray(T, float) * omega_q))


def _a3(omega, T):
    # max over [0, T] of e^{s omega}
    return np.where(omega <= 0, 1.0, np.exp(np.asarray(T, float) * omega))


_WHICH = ("M0", "M1", "M2", "M3", "M4", "M5", "M6")


def memory_bound(d: LinearMZDecomposition, constants: SemigroupConstants, which: str, *,
                 order: Optional[int] = None, horizon: Optional[float] = None,
                 memory_length: Optional[float] = None, cutoff: Optional[float] = None,
                 alpha: Optional[np.ndarray] = None, norm_form: str = "tighter") -> BoundReport:
    """Build an a-priori memory bound.

    Parameters
    ----------
    d : LinearMZDecomposition
    constants : SemigroupConstants
    which : {"M0", "M1", "M2", "M3", "M4", "M5", "M6"}
        Memory growth, t-model, short memory, H-model, Type-I, Type-II, Ht-model.
    order : int, optional
        Hierarchy order ``p >= 1`` (M3 to M6).
    horizon : float, optional
        ``T`` used for ``A1, A2, A3``. When omitted these constants are taken
        pointwise with ``T = t``, which is the tightest valid choice.
    memory_length : float, optional
        ``Delta t`` for M2 and ``Delta t_p`` for M4.
    cutoff : float, optional
        ``t_p`` for M5.
    alpha : ndarray, optional
        Externally supplied ratio bounds. Defaults to :func:`alpha_ratios`.
    norm_form : {"tighter", "product", "direct"}
        ``C1 prod(alpha)`` or the direct norm of ``L(QL)^(p+1) x1``.

    Returns
    -------
    BoundReport

    Raises
    ------
    InsufficientOrder
        If ``order`` exceeds the supplied ratios.
    """
    if which not in _WHICH:
        raise InvalidConfig(f"unknown bound {which!r}")
    om, oq, mq = constants.omega, constants.omega_q, constants.m_q
    c1 = constants.m_l * constants.m_q * norm_LQLn(d, 1)
    needs_p = which in ("M3", "M4", "M5", "M6")
    if needs_p and (order is None or order < 1):
        raise InvalidConfig(f"{which} needs order >= 1")
    if which == "M2" and memory_length is None:
        raise InvalidConfig("M2 needs memory_length")
    if which == "M4" and memory_length is None:
        raise InvalidConfig("M4 needs memory_length")
    if which == "M5" and cutoff is None:
        raise InvalidConfig("M5 needs cutoff")

    degenerate_at = None
    if alpha is None:
        n_need = order if needs_p else 1
        try:
            alpha = alpha_ratios(d, max(n_need, 1))
        except DegenerateRatio as exc:
            degenerate_at = exc.order
            alpha = np.array([norm_LQLn(d, j + 1) / norm_LQLn(d, j) if j < exc.order else 0.0
                              for j in range(1, max(n_need, 1) + 1)])
    alpha = np.asarray(alpha, dtype=float)

    def cprod(p):
        if p > alpha.size:
            raise InsufficientOrder(f"order {p} needs {p} ratios, have {alpha.size}")
        if degenerate_at is not None and p >= degenerate_at:
            return 0.0
        prod = c1 * float(np.prod(alpha[:p]))
        direct = constants.m_l * constants.m_q * norm_LQLn(d, p + 1)
        if norm_form == "product":
            return prod
        if norm_form == "direct":
            return direct
        return min(prod, direct)

    def consts(t):
        T = t if horizon is None else np.full_like(t, horizon)
        return _a1(om, oq, T), _a2(oq, T), _a3(om, T)

    if needs_p:
        cprod(order)  # validate order early
    T0 = np.array(horizon if horizon is not None else np.nan)
    a1 = float(_a1(om, oq, T0)) if horizon is not None else float("nan")
    a2 = float(_a2(oq, T0)) if horizon is not None else float("nan")
    a3 = float(_a3(om, T0)) if horizon is not None else float("nan")

    if which == "M0":
        def env(t, p):
            return c1 * exp_difference(om, oq, t)
    elif which == "M1":
        def env(t, p):
            return c1 * (exp_difference(oq, om, t) + t * np.exp(t * om) / mq)
    elif which == "M2":
        dt = float(memory_length)

        def env(t, p):
            s = np.clip(t - dt, 0.0, None)
            return c1 * np.exp(t * oq) * _h(om - oq, s)
    elif which == "M3":
        def env(t, p):
            A1, A2, _ = consts(t)
            return A1 * A2 * cprod(p) * t ** (p + 1) / math.factorial(p + 1)
    elif which == "M4":
        dt = float(memory_length)

        def env(t, p):
            A1, A2, _ = consts(t)
            s = np.clip(t - dt, 0.0, None)
            return A1 * A2 * cprod(p) * s ** (p + 1) / math.factorial(p + 1)
    elif which == "M5":
        tp = float(cutoff)

        def env(t, p):
            return cprod(p) * f_p(oq, t, p) * _h(om - oq, tp)
    else:
        def env(t, p):
            A1, A2, A3 = consts(t)
            c4 = A1 * A2 + A3 / mq
            return c4 * cprod(p) * t ** (p + 1) / math.factorial(p + 1)

    return BoundReport(constants, c1, a1, a2, a3, alpha, which, order, env)


# convergence predicates

@dataclass
class ConvergenceReport:
    """Outcome of the convergence corollaries at horizon ``T``.

    Attributes
    ----------
    uniform_h : bool
        ``alpha_j < (j+1)/T`` for all supplied ``j``.
    asymptotic_order : int or None
        Smallest ``p`` with ``C2 T (C T)^p / (p+1)! <= delta`` for ``alpha_j <= C``.
    short_time_horizon : float
        Largest ``T`` for which the order-``p`` bounds stay below ``deltas``.
    type1_condition : ndarray of bool
    type1_min_band : ndarray
        Smallest memory band ``Delta t_p`` keeping the Type-I bound below ``delta``.
    type2_condition : ndarray of bool
    type2_max_cutoff : ndarray
        Largest cutoff ``t_p`` keeping the Type-II bound below ``delta`` (``inf``
        when any cutoff works).
    ht_uniform : bool
        Uniform condition with the Ht constant ``C4`` (same ratio test).
    """

    uniform_h: bool
    asymptotic_order: Optional[int]
    short_time_horizon: float
    type1_condition: np.ndarray
    type1_min_band: np.ndarray
    type2_condition: np.ndarray
    type2_max_cutoff: np.ndarray
    ht_uniform: bool
    c2: float
    c4: float


def convergence_predicates(alpha, T: float, constants: SemigroupConstants, c1: float, *,
                           delta: float = 1e-3, deltas=None, C: Optional[float] = None,
                           p_max: int = 200) -> ConvergenceReport:
    """Evaluate the sufficient conditions for convergence of the hierarchies.

    Parameters
    ----------
    alpha : array_like
        ``alpha_1 .. alpha_n``.
    T : float
        Horizon.
    constants : SemigroupConstants
    c1 : float
        ``M M_Q |L Q L x1|``.
    delta : float
        Target accuracy for the asymptotic, Type-I and Type-II statements.
    deltas : array_like, optional
        Decreasing tolerances for the short-time statement. Defaults to
        ``delta / 2^(p-1)``.
    C : float, optional
        Uniform bound on the ratios. Defaults to ``max(alpha)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(alpha)):
        raise InvalidConfig("alpha must be finite")
    n = alpha.size
    om, oq = constants.omega, constants.omega_q
    A1 = float(_a1(om, oq, T))
    A2 = float(_a2(oq, T))
    A3 = float(_a3(om, T))
    c2 = c1 * A1 * A2
    c4 = c1 * (A1 * A2 + A3 / constants.m_q)
    j = np.arange(1, n + 1)
    uniform = bool(np.all(alpha < (j + 1) / T))

    Cb = float(np.max(alpha)) if C is None else float(C)
    asym = None
    for p in range(1, p_max + 1):
        lg = math.log(c2 * T) + p * math.log(Cb * T) - math.lgamma(p + 2) if c2 > 0 and Cb > 0 else -np.inf
        if lg <= math.log(delta):
            asym = p
            break

    if deltas is None:
        deltas = delta / 2.0 ** (j - 1)
    deltas = np.asarray(deltas, dtype=float)
    if c2 > 0 and Cb > 0:
        horizon = min((Cb * math.factorial(p + 1) * deltas[p - 1] / c2) ** (1.0 / (p + 1))
                      for p in range(1, deltas.size + 1)) / Cb
    else:
        horizon = float("inf")

    cum = np.concatenate([[1.0], np.cumprod(alpha)])  # cum[k] = prod_{i<=k}
    t1_cond = np.empty(n, dtype=bool)
    t1_band = np.empty(n)
    for k in range(1, n + 1):
        base = delta * math.factorial(k) / (c2 * cum[k - 1])
        t1_cond[k - 1] = alpha[k - 1] < (k + 1) * base ** (-1.0 / k)
        reach = (delta * math.factorial(k + 1) / (c2 * cum[k])) ** (1.0 / (k + 1))
        t1_band[k - 1] = max(0.0, T - reach)

    t2_cond = np.empty(n, dtype=bool)
    t2_cut = np.empty(n)
    for k in range(1, n + 1):
        if oq == 0:
            t2_cond[k - 1] = alpha[k - 1] < k / T
        else:
            num = f_p(oq, np.array([T]), k - 1)[0] if k > 1 else math.exp(T * oq)
            den = f_p(oq, np.array([T]), k)[0]
            # alpha_j < omega_Q (e^{T wq} - S_{j-2}) / (e^{T wq} - S_{j-1})
            t2_cond[k - 1] = alpha[k - 1] < num / den
        y = delta / (c1 * cum[k] * f_p(oq, np.array([T]), k)[0])
        dlt = om - oq
        if abs(dlt) < 1e-14:
            t2_cut[k - 1] = y
        else:
            arg = 1.0 + dlt * y
            t2_cut[k - 1] = math.log(arg) / dlt if arg > 0 else float("inf")

    return ConvergenceReport(uniform, asym, float(horizon), t1_cond, t1_band, t2_cond, t2_cut,
                             uniform, c2, c4)


# exact memory

class MemoryKernelEvaluator:
    """Fast evaluation of the scalar functions entering the memory integral.

    ``E(s) = [e^{sA}]_{11}`` and ``g_n(tau) = b^T e^{tau M11^T} (M11^T)^n a``, so
    that the level-``n`` memory is ``w_n(t) = x1_0 int E(s) g_n(t-s) ds``.
    Uses eigen-expansions when the eigenvector matrices are well conditioned,
    and matrix exponentials otherwise.
    """

    def __init__(self, d: LinearMZDecomposition, cond_max: float = 1e8):
        self.d = d
        A = d.matrix
        self._A = A
        self._eig_A = self._eig(A, cond_max)
        self._eig_M = self._eig(d.m11.T, cond_max) if d.m11.size else None

    @staticmethod
    def _eig(M, cond_max):
        lam, V = np.linalg.eig(M)
        if np.linalg.cond(V) > cond_max:
            return None
        return lam, V, np.linalg.inv(V)

    def E(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self._eig_A is not None:
            lam, V, Vi = self._eig_A
            w = V[0, :] * Vi[:, 0]
            return np.real(np.exp(np.outer(s, lam)) @ w)
        return np.array([expm(si * self._A)[0, 0] for si in s])

    def g(self, tau, level: int = 0) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        d = self.d
        if d.a.size == 0:
            return np.zeros_like(tau)
        v = d.krylov(level)[level]
        if self._eig_M is not None:
            lam, V, Vi = self._eig_M
            w = (d.b @ V) * (Vi @ v)
            return np.real(np.exp(np.outer(tau, lam)) @ w)
        mt = d.m11.T
        return np.array([d.b @ (expm(ti * mt) @ v) for ti in tau])


def _gauss_legendre_band(ev: MemoryKernelEvaluator, t, lo, hi, level, nq):
    x, w = np.polynomial.legendre.leggauss(nq)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    s = mid[:, None] + half[:, None] * x[None, :]
    vals = ev.E(s.ravel()).reshape(s.shape) * ev.g((t[:, None] - s).ravel(), level).reshape(s.shape)
    return ev.d.x1_0 * half * (vals @ w)


def exact_memory_oracle(d: LinearMZDecomposition, t_grid, band=None, *, level: int = 0,
                        n_quad: int = 64, rtol: float = 1e-8, atol: float = 1e-13,
                        evaluator: Optional[MemoryKernelEvaluator] = None) -> Trajectory:
    """Memory integral ``w_level(t)`` by Gauss-Legendre quadrature.

    Parameters
    ----------
    d : LinearMZDecomposition
    t_grid : array_like
        Uniform grid of evaluation times.
    band : callable, optional
        ``band(t) -> (lo, hi)`` restricting the integration variable ``s`` of
        ``e^{sL}``; e.g. ``(max(0, t - dt), t)`` for a trailing band. Defaults
        to the full range ``(0, t)``.
    level : int
        Hierarchy level; 0 gives the memory term of the reduced equation.
    n_quad : int
        Nodes per integral. The rule is rerun with ``2 n_quad`` nodes as a check.

    Raises
    ------
    NumericalFailure
        If the two quadrature rules disagree beyond ``rtol``/``atol``.
    """
    t = np.asarray(t_grid, dtype=float)
    ev = evaluator or MemoryKernelEvaluator(d)
    if band is None:
        lo, hi = np.zeros_like(t), t.copy()
    else:
        lo, hi = band(t)
        lo = np.broadcast_to(np.asarray(lo, float), t.shape).copy()
        hi = np.broadcast_to(np.asarray(hi, float), t.shape).copy()
    hi = np.minimum(hi, t)
    lo = np.clip(lo, 0.0, None)
    hi = np.maximum(hi, lo)
    v1 = _gauss_legendre_band(ev, t, lo, hi, level, n_quad)
    v2 = _gauss_legendre_band(ev, t, lo, hi, level, 2 * n_quad)
    bad = np.abs(v1 - v2) > atol + rtol * np.abs(v2)
    if np.any(bad):
        raise NumericalFailure(
            f"memory quadrature not converged at t={t[bad][0]:.4g}; increase n_quad")
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return Trajectory(float(t[0]) if t.size else 0.0, dt, v2, labels=[f"w_{level}"])


def exact_memory_closed_form(d: LinearMZDecomposition, t) -> np.ndarray:
    """``w0(t) = x1_0 ([A e^{tA}]_{11} - a11 [e^{tA}]_{11})`` from the exact mean path."""
    A = d.matrix
    out = []
    for ti in np.atleast_1d(np.asarray(t, dtype=float)):
        P = expm(ti * A)
        out.append(d.x1_0 * ((A @ P)[0, 0] - d.a11 * P[0, 0]))
    return np.array(out)
