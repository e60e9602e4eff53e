"""Truncated memory hierarchies and their terminal closures.

Linear systems use the exact streaming coefficients ``c_j = b^T (M11^T)^j a``.
An order-``n`` hierarchy carries the resolved mean ``E`` and the memory levels
``w_0 .. w_{n-1}``:

    E'       = a11 E + w_0
    w_j'     = c_j E + w_{j+1},      j < n - 1
    w_{n-1}' = c_{n-1} E + closure(t)

where ``closure`` is zero (H-model), ``t c_n E`` (Ht-model), or a banded piece
of the exact level-``n`` memory (Type-I / Type-II finite memory). Nonlinear
Lorenz models use the same structure with mean-field projected terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import InvalidConfig, Unsupported
from .mzlinear import (LinearMZDecomposition, MemoryKernelEvaluator, exact_memory_oracle,
                       liouvillian_coefficient)
from .odeint import Trajectory, n_steps, rk4

__all__ = [
    "ClosureSpec", "HierarchySystem", "build_linear_hierarchy", "integrate_with_banded_closure",
    "solve_hierarchy", "dyson_reconstruction", "Monomial", "mean_field_project",
    "build_lorenz63_tmodel", "build_lorenz96_tmodel", "LORENZ63_TERMS", "LORENZ96_TERMS",
]

TERMINALS = ("Truncate", "TModel", "TypeI", "TypeII")


@dataclass(frozen=True)
class ClosureSpec:
    """Hierarchy order and terminal closure.

    Parameters
    ----------
    order : int
        Number of memory levels kept.
    terminal : {"Truncate", "TModel", "TypeI", "TypeII"}
    band : float, optional
        Memory length ``Delta t_n`` (TypeI) or cutoff ``t_n`` (TypeII).
    """

    order: int
    terminal: str = "Truncate"
    band: Optional[float] = None

    def __post_init__(self):
        if self.order < 0:
            raise InvalidConfig("order must be >= 0")
        if self.terminal not in TERMINALS:
            raise InvalidConfig(f"terminal must be one of {TERMINALS}")
        if self.terminal in ("TypeI", "TypeII"):
            if self.band is None or self.band < 0:
                raise InvalidConfig(f"{self.terminal} needs a non-negative band")


@dataclass
class HierarchySystem:
    """Assembled hierarchy ready for integration.

    Attributes
    ----------
    state_dim : int
    rhs : callable
        ``rhs(t, y)``.
    labels : list of str
    y0 : ndarray
        Initial state; memory levels start at zero.
    coefficients : ndarray
        Streaming coefficients used, when applicable.
    """

    state_dim: int
    rhs: Callable
    labels: list
    y0: np.ndarray
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    meta: dict = field(default_factory=dict)

    def solve(self, t1: float, dt: float = 1e-3, record_every: int = 1) -> Trajectory:
        return rk4(self.rhs, self.y0, 0.0, t1, dt, record_every=record_every, labels=self.labels)


def _labels(n: int) -> list:
    return ["E[x1|x1(0)]"] + [f"w_{j}" for j in range(n)]


def build_linear_hierarchy(d: LinearMZDecomposition, spec: ClosureSpec, *,
                           forcing: str = "coupled",
                           terminal_forcing: Optional[Callable] = None,
                           evaluator: Optional[MemoryKernelEvaluator] = None) -> HierarchySystem:
    """Assemble the order-``n`` linear hierarchy.

    Parameters
    ----------
    d : LinearMZDecomposition
    spec : ClosureSpec
        ``Truncate`` or ``TModel``. Banded closures go through
        :func:`integrate_with_banded_closure`.
    forcing : {"coupled", "exact"}
        ``coupled`` drives the memory levels with the hierarchy's own ``E``
        (the reduced model). ``exact`` drives them with the exact conditional
        mean, which isolates the memory approximation error.
    terminal_forcing : callable, optional
        ``f(t)`` added to the last level; used internally for banded closures.
    """
    if forcing not in ("coupled", "exact"):
        raise InvalidConfig("forcing must be 'coupled' or 'exact'")
    if spec.terminal in ("TypeI", "TypeII") and terminal_forcing is None:
        raise InvalidConfig("banded closures need integrate_with_banded_closure")
    n = spec.order
    c = np.array([liouvillian_coefficient(d, j + 1) for j in range(n + 1)])
    a11, x10 = d.a11, d.x1_0
    ev = evaluator
    if forcing == "exact" and ev is None:
        ev = MemoryKernelEvaluator(d)
    tmodel = spec.terminal == "TModel"

    def rhs(t, y):
        dy = np.empty_like(y)
        e_drive = y[0] if forcing == "coupled" else x10 * ev.E(t)[0]
        close = 0.0
        if tmodel:
            close = t * c[n] * e_drive
        elif terminal_forcing is not None:
            close = terminal_forcing(t)
        if n == 0:
            dy[0] = a11 * y[0] + close
            return dy
        dy[0] = a11 * y[0] + y[1]
        for j in range(n - 1):
            dy[1 + j] = c[j] * e_drive + y[2 + j]
        dy[n] = c[n - 1] * e_drive + close
        return dy

    y0 = np.zeros(n + 1)
    y0[0] = x10
    return HierarchySystem(n + 1, rhs, _labels(n), y0, c,
                           {"terminal": spec.terminal, "forcing": forcing})


def solve_hierarchy(d: LinearMZDecomposition, spec: ClosureSpec, t1: float, *, dt: float = 1e-3,
                    record_every: int = 1, forcing: str = "coupled") -> Trajectory:
    """Integrate a linear hierarchy with any terminal closure."""
    if spec.terminal in ("TypeI", "TypeII"):
        out_dt = dt * record_every
        grid = np.arange(n_steps(0.0, t1, out_dt) + 1) * out_dt
        return integrate_with_banded_closure(d, spec, grid, dt=dt, forcing=forcing)
    return build_linear_hierarchy(d, spec, forcing=forcing).solve(t1, dt, record_every)


def integrate_with_banded_closure(d: LinearMZDecomposition, spec: ClosureSpec, t_grid, *,
                                  dt: float = 1e-3, forcing: str = "coupled",
                                  n_quad: int = 64) -> Trajectory:
    """Hierarchy with a Type-I or Type-II terminal closure.

    The last level receives the exact level-``n`` memory restricted to
    ``s in [max(0, t - band), t]`` (Type-I) or ``s in [min(t, band), t]``
    (Type-II). It is tabulated on a grid of spacing ``dt / 2`` so every
    Runge-Kutta stage hits a node.
    """
    if spec.terminal not in ("TypeI", "TypeII"):
        raise InvalidConfig("integrate_with_banded_closure handles TypeI/TypeII only")
    t_grid = np.asarray(t_grid, dtype=float)
    t1 = float(t_grid[-1])
    out_dt = float(t_grid[1] - t_grid[0]) if t_grid.size > 1 else t1
    record_every = int(round(out_dt / dt))
    if abs(record_every * dt - out_dt) > 1e-9 * out_dt:
        raise InvalidConfig("output spacing must be a multiple of dt")
    half = 0.5 * dt
    m = n_steps(0.0, t1, half)
    tab_t = np.arange(m + 1) * half
    band = float(spec.band)
    if spec.terminal == "TypeI":
        def bfun(t):
            return np.maximum(0.0, t - band), t
    else:
        def bfun(t):
            return np.minimum(t, band), t
    ev = MemoryKernelEvaluator(d)
    tab = exact_memory_oracle(d, tab_t, bfun, level=spec.order, n_quad=n_quad,
                              evaluator=ev).values[:, 0]

    def term(t):
        return tab[int(round(t / half))]

    hs = build_linear_hierarchy(d, ClosureSpec(spec.order, "Truncate"), forcing=forcing,
                                terminal_forcing=term, evaluator=ev)
    hs.meta["terminal"] = spec.terminal
    return hs.solve(t1, dt, record_every)


def dyson_reconstruction(d: LinearMZDecomposition, traj: Trajectory, order: int,
                         terminal: str = "Truncate", stride: int = 1) -> np.ndarray:
    """Memory ``w_0`` rebuilt from the hierarchy's own ``E`` by repeated integration.

    ``w_0(t) = sum_{j<n} c_j int_0^t (t-s)^j / j! E(s) ds`` plus the Ht term
    ``c_n int_0^t (t-s)^{n-1}/(n-1)! s E(s) ds`` (for ``n = 0`` the Ht term is
    ``t c_0 E(t)``). Returns values at ``traj.t[::stride]``.
    """
    t = traj.t
    E = traj.values[:, 0]
    c = [liouvillian_coefficient(d, j + 1) for j in range(order + 1)]
    idx = np.arange(0, t.size, stride)
    out = np.zeros(idx.size)
    for k, i in enumerate(idx):
        if i == 0:
            continue
        s = t[: i + 1]
        Es = E[: i + 1]
        tot = 0.0
        for j in range(order):
            tot += c[j] * simpson((t[i] - s) ** j / math.factorial(j) * Es, x=s)
        if terminal == "TModel":
            if order == 0:
                tot += t[i] * c[0] * E[i]
            else:
                tot += c[order] * simpson((t[i] - s) ** (order - 1) / math.factorial(order - 1)
                                          * s * Es, x=s)
        out[k] = tot
    return out


# nonlinear mean-field closures

@dataclass(frozen=True)
class Monomial:
    """``coef * prod_i x_i ** exps[i]`` in the resolved variables."""

    coef: float
    exps: tuple

    def __post_init__(self):
        if not all(isinstance(e, (int, np.integer)) and e >= 0 for e in self.exps):
            raise Unsupported("exponents must be non-negative integers")


def mean_field_project(observable, means) -> float:
    """Mean-field closure: evaluate a monomial at the conditional means.

    ``E[x1^2 x2 | .]`` is replaced by ``m1^2 m2``. A sequence of monomials is
    projected termwise, which is exact for the linear part.

    Parameters
    ----------
    observable : Monomial, tuple of int, or sequence of Monomial
    means : array_like
        Conditional means of the resolved variables.

    Raises
    ------
    Unsupported
        For anything that is not a polynomial in the resolved variables.
    """
    m = np.asarray(means, dtype=float)
    if isinstance(observable, tuple) and all(isinstance(e, (int, np.integer)) for e in observable):
        observable = Monomial(1.0, observable)
    if isinstance(observable, Monomial):
        if len(observable.exps) > m.shape[-1]:
            raise Unsupported("monomial has more variables than means")
        val = observable.coef
        for i, e in enumerate(observable.exps):
            if e:
                val = val * m[..., i] ** e
        return val
    if isinstance(observable, (list, tuple)) and all(isinstance(o, Monomial) for o in observable):
        return sum(mean_field_project(o, m) for o in observable)
    raise Unsupported(f"cannot mean-field project {type(observable).__name__}")


def _poly(*terms) -> tuple:
    return tuple(Monomial(float(c), e) for c, e in terms)


def LORENZ63_TERMS(sigma: float = 10.0, r: float = 28.0, beta: float = 8.0 / 3.0,
                   sign: str = "derived") -> dict:
    """Projected Liouvillian terms for Lorenz-63 with ``x3(0) ~ N(0, 1)``.

    Keys ``x1``, ``x2`` (streaming), ``PLQLx2`` and ``PLQL2x2``
    (``P L (QL)^2 x2``), as polynomials in ``(x1, x2)``. ``sign="printed"``
    flips the streaming term of ``x1`` to ``sigma (x1 - x2)``.
    """
    s1 = 1.0 if sign == "derived" else -1.0
    if sign not in ("derived", "printed"):
        raise InvalidConfig("sign must be 'derived' or 'printed'")
    return {
        "x1": _poly((s1 * sigma, (0, 1)), (-s1 * sigma, (1, 0))),
        "x2": _poly((r, (1, 0)), (-1.0, (0, 1))),
        "PLQLx2": _poly((-1.0, (2, 1))),
        "PLQL2x2": _poly((beta + sigma, (2, 1)), (-sigma, (1, 2)), (sigma, (1, 0))),
    }


def LORENZ96_TERMS(F: float = 5.0, sign: str = "derived") -> dict:
    """Projected Liouvillian terms for the modified Lorenz-96 system.

    Unresolved ``x3 .. xN`` are iid ``N(0, 1)``. ``sign="printed"`` negates
    the first memory term to ``x1^2 x2 - F x1``.
    """
    if sign not in ("derived", "printed"):
        raise InvalidConfig("sign must be 'derived' or 'printed'")
    s = 1.0 if sign == "derived" else -1.0
    return {
        "x1": _poly((-1.0, (1, 0)), (1.0, (1, 1)), (F, (0, 0))),
        "x2": _poly((-1.0, (0, 1)), (F, (0, 0))),
        "PLQLx2": _poly((s * F, (1, 0)), (-s, (2, 1))),
        "PLQL2x2": _poly((F * F, (0, 0)), (F, (1, 1)), (-2 * F, (1, 0)), (-1.0, (2, 2)),
                         (2.0, (2, 1)), (1.0, (2, 0))),
    }


def _ht_from_terms(terms: dict, x0: Sequence[float], order: int, label: str) -> HierarchySystem:
    if order not in (0, 1):
        raise InvalidConfig("nonlinear Ht-models are available for order 0 and 1")
    x1, x2 = terms["x1"], terms["x2"]
    m1, m2 = terms["PLQLx2"], terms["PLQL2x2"]

    if order == 0:
        def rhs(t, y):
            return np.array([mean_field_project(x1, y),
                             mean_field_project(x2, y) + t * mean_field_project(m1, y)])
        labels = ["x1m", "x2m"]
        y0 = np.array(x0, dtype=float)
    else:
        def rhs(t, y):
            mm = y[:2]
            return np.array([mean_field_project(x1, mm),
                             mean_field_project(x2, mm) + y[2],
                             mean_field_project(m1, mm) + t * mean_field_project(m2, mm)])
        labels = ["x1m", "x2m", "w_0"]
        y0 = np.array([x0[0], x0[1], 0.0])
    return HierarchySystem(len(y0), rhs, labels, y0, meta={"model": label, "order": order})


def build_lorenz63_tmodel(sigma: float = 10.0, r: float = 28.0, beta: float = 8.0 / 3.0, *,
                          x0=(1.0, 1.0), order: int = 0, sign: str = "derived") -> HierarchySystem:
    """Ht-model of order 0 (the t-model) or 1 for the Lorenz-63 conditional mean.

    Order 0: ``x1m' = sigma (x2m - x1m)``, ``x2m' = -x2m + r x1m - t x1m^2 x2m``.
    """
    return _ht_from_terms(LORENZ63_TERMS(sigma, r, beta, sign), x0, order, "Lorenz63")


def build_lorenz96_tmodel(F: float = 5.0, *, x0=(1.0, 1.0), order: int = 0,
                          sign: str = "derived") -> HierarchySystem:
    """Ht-model of order 0 or 1 for the modified Lorenz-96 resolved pair.

    Order 0: ``x1m' = -x1m + x1m x2m + F``, ``x2m' = -x2m + F + t (F x1m - x1m^2 x2m)``.
    """
    return _ht_from_terms(LORENZ96_TERMS(F, sign), x0, order, "Lorenz96")
