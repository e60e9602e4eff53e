"""Memory kernels of the one-dimensional generalized Langevin equation.

For a normalized correlation ``C`` with zero streaming term,
``C'(t) = -int_0^t K(s) C(t-s) ds`` and in Laplace space
``K_hat(s) = -s + 1 / C_hat(s)``. ``C`` is replaced by a Chebyshev-Lobatto
interpolant on ``[0, T]`` whose transform is known in closed form, and
``K`` is recovered with a fixed-Talbot contour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline

from .errors import ContourFailure, IllConditioned, InvalidConfig
from .odeint import Trajectory, write_csv

__all__ = [
    "bessel_j", "chain_vacf_analytic", "chain_kernel_analytic", "PolynomialFit",
    "fit_chebyshev_lobatto", "laplace_of_polynomial", "talbot_inverse", "KernelEstimate",
    "kernel_from_correlation", "kernel_bound", "HALD_BOUND", "CHAIN_BOUND",
]

HALD_BOUND = 1.39786
CHAIN_BOUND = 2.0


# Bessel functions of the first kind

def _bessel_series(n: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half ** n / math.factorial(n)
    acc = term.copy()
    q = -half * half
    for k in range(1, 80):
        term = term * q / (k * (k + n))
        acc = acc + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(acc), 1e-300)):
            break
    return acc


def _bessel_miller(n: int, x: np.ndarray) -> np.ndarray:
    # downward recurrence from an even start, normalized by J0 + 2 sum J_2k = 1
    xmax = float(np.max(x))
    m = int(max(n, xmax) + 30 + 2 * math.sqrt(40.0 * max(n, xmax)))
    m += m % 2
    jp1 = np.zeros_like(x)
    j = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    want = np.zeros_like(x)
    for k in range(m, 0, -1):
        jm1 = (2.0 * k / x) * j - jp1
        jp1, j = j, jm1
        # j now holds J_{k-1}
        if k - 1 == n:
            want = j.copy()
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
        big = np.abs(j) > 1e250
        if np.any(big):
            sc = np.where(big, 1e-250, 1.0)
            j *= sc
            jp1 *= sc
            norm *= sc
            want *= sc
    norm += j  # J_0
    return want / norm


def bessel_j(order: int, x):
    """Bessel function ``J_n(x)`` for integer ``n >= 0`` and ``x >= 0``.

    Ascending series for ``x < 8`` and normalized Miller downward recurrence
    above.

    Parameters
    ----------
    order : int
    x : float or array_like

    Returns
    -------
    float or ndarray
    """
    if order < 0:
        raise InvalidConfig("order must be non-negative")
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    if np.any(xa < 0):
        raise InvalidConfig("x must be non-negative")
    out = np.empty_like(xa)
    small = xa < 8.0
    if np.any(small):
        out[small] = _bessel_series(order, xa[small])
    if np.any(~small):
        out[~small] = _bessel_miller(order, xa[~small])
    return float(out[0]) if scalar else out


def chain_vacf_analytic(t):
    """``J0(2t) - J4(2t)``, the tagged-particle momentum correlation of a long chain."""
    t = np.asarray(t, dtype=float)
    return bessel_j(0, 2 * t) - bessel_j(4, 2 * t)


def chain_kernel_analytic(t):
    """``J1(2t)/t + 1`` with the limit 2 at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty_like(t)
    small = t < 1e-3
    ts = t[small]
    # J1(2t)/t = sum_k (-1)^k t^{2k} / (k! (k+1)!)
    out[small] = 2.0 - ts ** 2 / 2.0 + ts ** 4 / 12.0
    out[~small] = bessel_j(1, 2 * t[~small]) / t[~small] + 1.0
    return float(out[0]) if scalar else out


# polynomial fit

@dataclass
class PolynomialFit:
    """Chebyshev interpolant of a correlation function on ``[0, T]``.

    Evaluation and differentiation use the Chebyshev series; the monomial
    coefficients in ``t`` are exposed for reference only.
    """

    interval: tuple
    degree: int
    cheb_coef: np.ndarray
    nodes: np.ndarray = field(default=None, repr=False)
    node_values: np.ndarray = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.interval[1])

    def _x(self, t):
        return 2.0 * np.asarray(t, dtype=float) / self.T - 1.0

    def __call__(self, t):
        return cheb.chebval(self._x(t), self.cheb_coef)

    @property
    def coefficients(self) -> np.ndarray:
        """Monomial coefficients ``c_k`` with ``p(t) = sum c_k t^k``."""
        if self.degree > 60:
            raise IllConditioned("monomial conversion above degree 60 is ill-conditioned")
        pc = cheb.cheb2poly(self.cheb_coef)
        # substitute x = 2t/T - 1
        out = np.zeros(self.degree + 1)
        lin = np.array([-1.0, 2.0 / self.T])
        power = np.array([1.0])
        for k, ck in enumerate(pc):
            out[: power.size] += ck * power
            power = npoly.polymul(power, lin)
        return out

    def derivatives_at(self, t: float, dps: Optional[int] = None):
        """``p^{(k)}(t)`` for ``k = 0..degree``.

        High derivatives of a Chebyshev series lose many digits in double
        precision; they are accumulated in ``mpmath`` at ``dps`` digits
        (default 60) and returned as ``mpf`` values when ``dps`` is given,
        floats otherwise.
        """
        work = 60 if dps is None else dps
        with mpmath.workdps(work):
            x = 2 * mpmath.mpf(float(t)) / mpmath.mpf(self.T) - 1
            scale = mpmath.mpf(2) / mpmath.mpf(self.T)
            c = [mpmath.mpf(float(v)) for v in self.cheb_coef]
            out = []
            for k in range(self.degree + 1):
                out.append(_cheb_value(c, x) * scale ** k)
                c = _cheb_derivative(c)
        if dps is None:
            return np.array([float(v) for v in out])
        return out


def _cheb_value(c, x):
    # Clenshaw recurrence
    b1 = b2 = 0
    for ck in reversed(c[1:]):
        b1, b2 = 2 * x * b1 - b2 + ck, b1
    return x * b1 - b2 + c[0]


def _cheb_derivative(c):
    n = len(c) - 1
    if n == 0:
        return [c[0] * 0]
    d = [c[0] * 0] * (n + 1)
    for j in range(n, 0, -1):
        d[j - 1] = (d[j + 1] if j + 1 <= n else 0) + 2 * j * c[j]
    d[0] = d[0] / 2
    return d[:n]


def fit_chebyshev_lobatto(traj, degree: int, T: Optional[float] = None, column=0) -> PolynomialFit:
    """Interpolate a uniformly sampled curve at Chebyshev-Lobatto nodes.

    Parameters
    ----------
    traj : Trajectory or tuple (t, values)
        Uniform samples covering ``[0, T]``.
    degree : int
    T : float, optional
        Right end of the interval. Defaults to the last sample time.
    column : int or str
        Column of a Trajectory to fit.

    Raises
    ------
    IllConditioned
        For ``degree > 60``.
    InvalidConfig
        If the samples do not cover ``[0, T]`` or are too few.
    """
    if degree > 60:
        raise IllConditioned("degree above 60 is not supported")
    if degree < 0:
        raise InvalidConfig("degree must be non-negative")
    if isinstance(traj, Trajectory):
        t, y = traj.t, traj.column(column)
    else:
        t, y = (np.asarray(a, dtype=float) for a in traj)
    T = float(t[-1]) if T is None else float(T)
    if t[0] > 1e-12 or t[-1] < T - 1e-9:
        raise InvalidConfig("samples must cover [0, T]")
    if degree + 1 > t.size:
        raise InvalidConfig("degree + 1 exceeds the number of samples")
    if degree == 0:
        nodes = np.array([0.0])
        vals = np.array([y[0]])
        return PolynomialFit((0.0, T), 0, vals.copy(), nodes, vals)
    x = np.cos(np.pi * np.arange(degree + 1) / degree)
    nodes = 0.5 * T * (x + 1.0)
    if t.size >= 4:
        vals = CubicSpline(t, y)(nodes)
    else:
        vals = np.interp(nodes, t, y)
    coef = cheb.chebfit(x, vals, degree)
    return PolynomialFit((0.0, T), degree, coef, nodes, vals)


def _horner_inverse(coefs, s, start=0):
    """``sum_{k >= start} coefs[k] / s^(k - start)``; works for complex and mpmath."""
    acc = 0
    for k in range(len(coefs) - 1, start - 1, -1):
        acc = acc / s + coefs[k]
    return acc


def _quad_truncated(fit: PolynomialFit, s: complex) -> complex:
    T = fit.T
    panels = int(math.ceil(T * (abs(s) + 1.0) / 4.0)) + 2
    xg, wg = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(0.0, T, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    hw = 0.5 * (edges[1:] - edges[:-1])
    tt = (mid[:, None] + hw[:, None] * xg[None, :]).ravel()
    w = (hw[:, None] * wg[None, :]).ravel()
    return complex(np.sum(w * fit(tt) * np.exp(-s * tt)))


def laplace_of_polynomial(fit: PolynomialFit, s, mode: str = "truncated", dps: Optional[int] = None):
    """Laplace transform of the fitted polynomial.

    Parameters
    ----------
    fit : PolynomialFit
    s : complex
        Transform variable with ``Re(s) > 0`` for the truncated form.
    mode : {"truncated", "extended"}
        ``truncated`` integrates ``p`` over ``[0, T]`` only,
        ``U(s) - e^{-sT} V(s)`` with ``U = sum p^(k)(0)/s^(k+1)`` and
        ``V = sum p^(k)(T)/s^(k+1)``; falls back to Gauss-Legendre quadrature
        when that sum cancels. ``extended`` integrates the polynomial over
        ``[0, inf)``, i.e. ``U(s)`` alone.
    dps : int, optional
        Extended mode only: evaluate in mpmath with this many digits and
        return an ``mpc``. Needed for high degrees at small ``|s|``, where the
        terms of ``U`` cancel.
    """
    if mode == "extended":
        if dps is not None:
            with mpmath.workdps(dps):
                d0 = fit.derivatives_at(0.0, dps=max(dps, 60))
                s = mpmath.mpc(s)
                return _horner_inverse(d0, s) / s
        return _horner_inverse(list(fit.derivatives_at(0.0)), s) / s
    d0 = fit.derivatives_at(0.0)
    if mode != "truncated":
        raise InvalidConfig("mode must be 'truncated' or 'extended'")
    s = complex(s)
    dT = fit.derivatives_at(fit.T)
    U = _horner_inverse(list(d0), s) / s
    V = _horner_inverse(list(dT), s) / s
    e = np.exp(-s * fit.T)
    val = U - e * V
    scale = max(abs(U), abs(e * V))
    if not np.isfinite(val) or scale > 1e3 * max(abs(val), 1e-300):
        return _quad_truncated(fit, s)
    return val


def talbot_inverse(F: Callable, t, n_nodes: int = 64, dps: Optional[int] = 30):
    """Fixed-Talbot numerical inverse Laplace transform.

    ``f(t) ~ (r/M) [F(r) e^{rt} / 2 + sum_{k=1}^{M-1} Re(e^{t s_k} F(s_k) (1 + i sigma_k))]``
    with ``r = 2M/(5t)``, ``s_k = r theta_k (cot theta_k + i)``,
    ``theta_k = k pi / M`` and ``sigma_k = theta_k + (theta_k cot theta_k - 1) cot theta_k``.

    Parameters
    ----------
    F : callable
        Transform. Receives an ``mpmath.mpc`` scalar when ``dps`` is set and a
        complex ndarray of nodes otherwise.
    t : float or array_like
        Positive times.
    n_nodes : int
        Number of contour nodes ``M``.
    dps : int or None
        Decimal digits for the node sum. ``None`` uses double precision, which
        limits accuracy to about ``e^{2M/5}`` times machine epsilon.

    Raises
    ------
    ContourFailure
        If a contour term is not finite.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise InvalidConfig("t must be positive")
    M = int(n_nodes)
    out = np.empty_like(ts)
    if dps is None:
        k = np.arange(1, M)
        th = k * np.pi / M
        cot = 1.0 / np.tan(th)
        sig = th + (th * cot - 1.0) * cot
        for i, ti in enumerate(ts):
            r = 2.0 * M / (5.0 * ti)
            s = r * th * (cot + 1j)
            keep = s.real * ti > -700.0
            Fs = np.asarray(F(s[keep]), dtype=complex)
            F0 = complex(np.asarray(F(np.array([r + 0j]))).ravel()[0])
            if not (np.all(np.isfinite(Fs)) and np.isfinite(F0)):
                raise ContourFailure(f"non-finite transform on the contour at t={ti:.4g}")
            tot = 0.5 * math.exp(r * ti) * F0.real
            tot += np.sum((np.exp(ti * s[keep]) * Fs * (1.0 + 1j * sig[keep])).real)
            out[i] = r / M * tot
        return out if np.ndim(t) else float(out[0])
    with mpmath.workdps(dps):
        th = [mpmath.mpf(k) * mpmath.pi / M for k in range(1, M)]
        cot = [mpmath.cot(x) for x in th]
        sig = [x + (x * c - 1) * c for x, c in zip(th, cot)]
        for i, ti in enumerate(ts):
            tm = mpmath.mpf(float(ti))
            r = mpmath.mpf(2 * M) / (5 * tm)
            F0 = F(mpmath.mpc(r, 0))
            tot = mpmath.exp(r * tm) * mpmath.re(F0) / 2
            for x, c, sg in zip(th, cot, sig):
                s = r * x * mpmath.mpc(c, 1)
                term = mpmath.exp(tm * s) * F(s) * mpmath.mpc(1, sg)
                if not mpmath.isfinite(term):
                    raise ContourFailure(f"non-finite transform on the contour at t={ti:.4g}")
                tot += mpmath.re(term)
            out[i] = float(r / M * tot)
    return out if np.ndim(t) else float(out[0])


# kernels

@dataclass
class KernelEstimate:
    """Memory kernel on a time grid with its a-priori bound."""

    t_grid: np.ndarray
    k_values: np.ndarray
    bound: float
    method: str

    def to_csv(self, path):
        n = self.t_grid.size
        # method written as a numeric code column: 0 analytic, 1 Talbot
        code = 0.0 if self.method == "AnalyticChain" else 1.0
        write_csv(path, ["t", "K", "bound", "method"],
                  np.column_stack([self.t_grid, self.k_values, np.full(n, self.bound),
                                   np.full(n, code)]))


def kernel_from_correlation(C, degree: int = 50, t_grid=None, *, T: Optional[float] = None,
                            transform: str = "extended", n_nodes: int = 64,
                            dps: Optional[int] = 30, bound: float = float("nan"),
                            rel_floor: float = 1e-13) -> KernelEstimate:
    """Kernel ``K = L^{-1}[-s + 1/C_hat(s)]`` from a sampled correlation.

    ``K_hat`` is formed without cancellation as ``(1 - s C_hat)/C_hat`` where
    ``1 - s C_hat = -sum_{k>=1} p^(k)(0)/s^k`` for the extended transform of a
    polynomial with ``p(0) = 1``.

    Parameters
    ----------
    C : Trajectory, (t, values) tuple, or PolynomialFit
        Normalized correlation.
    degree : int
        Chebyshev-Lobatto degree when ``C`` is sampled.
    t_grid : array_like
        Positive evaluation times.
    T : float, optional
        Fit interval end.
    transform : {"extended", "truncated"}
        The truncated form carries ``e^{-sT}``, which grows without bound on
        the left branch of the Talbot contour; it is kept for comparison.
    n_nodes, dps
        Talbot parameters, see :func:`talbot_inverse`.
    bound : float
        Bound stored in the estimate.

    Raises
    ------
    ContourFailure
        If ``C_hat`` nearly vanishes on the contour.
    """
    fit = C if isinstance(C, PolynomialFit) else fit_chebyshev_lobatto(C, degree, T)
    if t_grid is None:
        raise InvalidConfig("t_grid is required")
    t_grid = np.asarray(t_grid, dtype=float)
    work = 60 if dps is None else max(dps, 60)
    d0 = fit.derivatives_at(0.0, dps=work)
    if abs(d0[0]) < 1e-12:
        raise ContourFailure("C(0) vanishes")
    with mpmath.workdps(work):
        d0 = [v / d0[0] for v in d0]
    if transform == "extended":
        coefs = d0 if dps is not None else [float(v) for v in d0]

        def Khat(s):
            # C_hat = (1 + H/s)/s and 1 - s C_hat = -H/s with H = sum_{k>=1} p^(k)(0)/s^(k-1)
            h = _horner_inverse(coefs, s, start=1) / s
            sc = 1 + h
            if np.any(np.abs(np.asarray(complex(sc) if dps is not None else sc)) < rel_floor):
                raise ContourFailure("C_hat vanishes on the contour")
            return -h * s / sc
    elif transform == "truncated":
        p0 = fit.derivatives_at(0.0, dps=work)[0]
        with mpmath.workdps(work):
            dT = [v / p0 for v in fit.derivatives_at(fit.T, dps=work)]
        if dps is not None:
            c0, cT = d0, dT
            expf = mpmath.exp
        else:
            c0, cT = [float(v) for v in d0], [float(v) for v in dT]
            expf = np.exp
        Tf = fit.T

        def Khat(s):
            e = expf(-s * Tf)
            chat = _horner_inverse(c0, s) / s - e * _horner_inverse(cT, s) / s
            num = -_horner_inverse(c0, s, start=1) / s + e * _horner_inverse(cT, s)
            return num / chat
    else:
        raise InvalidConfig("transform must be 'extended' or 'truncated'")

    k = talbot_inverse(Khat, t_grid, n_nodes=n_nodes, dps=dps)
    return KernelEstimate(t_grid, np.atleast_1d(k), float(bound), "TalbotFromCorrelation")


def kernel_bound(norm_ratio: float) -> float:
    """Uniform kernel bound ``|u1'(0)|^2 / |u1(0)|^2``."""
    if norm_ratio < 0:
        raise InvalidConfig("norm ratio must be non-negative")
    return float(norm_ratio)
