"""Monte-Carlo ground truth: conditional mean paths and Gibbs ensembles.

Randomness is organized in fixed blocks of samples. Block ``b`` draws from
``SeedSequence(seed).spawn(n_blocks)[b]``, so every sample depends only on the
seed and its index, never on the number of worker threads. Block results are
reduced in block order.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import cholesky, expm, solve_triangular

from .dynsys import DynamicalSystem
from .errors import (DegenerateObservable, InvalidConfig, NumericalFailure, TuningWarning,
                     UnreliableEstimate)
from .odeint import Trajectory, rk4_step

__all__ = [
    "EnsembleSpec", "GibbsSamples", "conditional_mean_path", "metropolis_gibbs",
    "gaussian_gibbs", "gibbs_samples", "equilibrium_autocorrelation",
    "equilibrium_norm_ratio", "n_workers", "BLOCK_SIZE",
]

BLOCK_SIZE = 1000


def n_workers() -> int:
    """Worker count, capped by the ``MZMEM_THREADS`` environment variable."""
    cap = os.environ.get("MZMEM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise InvalidConfig("MZMEM_THREADS must be an integer") from exc
    return n


def _block_sizes(n: int, block: int = BLOCK_SIZE):
    nb = math.ceil(n / block)
    return [min(block, n - b * block) for b in range(nb)]


def _map_blocks(fn: Callable, seed: int, sizes):
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    args = list(zip(range(len(sizes)), sizes, seqs))
    workers = min(n_workers(), len(args))
    if workers <= 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda a: fn(*a), args))


def _uniform_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise InvalidConfig("t_grid must be a non-empty 1-D array")
    if t.size == 1:
        return t, 1.0
    h = np.diff(t)
    if np.max(np.abs(h - h[0])) > 1e-9 * max(1.0, abs(h[0])):
        raise InvalidConfig("t_grid must be uniform")
    if h[0] <= 0:
        raise InvalidConfig("t_grid must be increasing")
    return t, float(h[0])


def _substeps(spacing: float, dt: Optional[float], default: float = 0.01) -> int:
    target = default if dt is None else dt
    k = max(1, int(math.ceil(spacing / target - 1e-9)))
    if dt is not None and abs(spacing / k - dt) > 1e-9 * dt:
        raise InvalidConfig("dt must divide the t_grid spacing")
    return k


def _propagate_batch(system: DynamicalSystem, X0: np.ndarray, t: np.ndarray, spacing: float,
                     dt: Optional[float], observe: Callable):
    """Observed values ``observe(x(t_k))`` for each row of ``X0``; NaN rows diverged."""
    k = _substeps(spacing, dt)
    h = spacing / k
    x = X0.copy()
    if t[0] != 0.0:
        raise InvalidConfig("t_grid must start at 0")
    out = [observe(x)]
    with np.errstate(all="ignore"):
        for _ in range(t.size - 1):
            for _ in range(k):
                x = rk4_step(system, 0.0, x, h)
            bad = ~np.all(np.isfinite(x), axis=-1)
            if np.any(bad):
                x[bad] = np.nan
            out.append(observe(x))
    return np.stack(out, axis=1)


@dataclass
class EnsembleSpec:
    """Initial ensemble: Dirac resolved components and random unresolved ones.

    Parameters
    ----------
    resolved : dict
        ``index -> value`` for the resolved (conditioned) components.
    dim : int
        State dimension.
    n_samples : int
    seed : int
    unresolved : {"normal", "gibbs"}
        ``normal`` draws the remaining components i.i.d. ``N(0, 1)``.
        ``gibbs`` draws full states from ``e^{-beta H}/Z`` and ignores
        ``resolved``.
    beta : float
    """

    resolved: dict
    dim: int
    n_samples: int
    seed: int = 0
    unresolved: str = "normal"
    beta: float = 1.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidConfig("n_samples must be >= 1")
        if self.unresolved not in ("normal", "gibbs"):
            raise InvalidConfig("unresolved must be 'normal' or 'gibbs'")
        for i in self.resolved:
            if not 0 <= int(i) < self.dim:
                raise InvalidConfig(f"resolved index {i} out of range")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.standard_normal((n, self.dim))
        for i, v in self.resolved.items():
            x[:, int(i)] = v
        return x


def conditional_mean_path(system: DynamicalSystem, ensemble: EnsembleSpec, observable: int,
                          t_grid, *, dt: Optional[float] = None, method: str = "auto",
                          max_diverged: float = 0.01) -> Trajectory:
    """Monte-Carlo conditional mean ``E[x_obs(t) | resolved initial values]``.

    Parameters
    ----------
    system : DynamicalSystem
    ensemble : EnsembleSpec
    observable : int or array_like
        Zero-based component index, or weights ``w`` of the linear
        observable ``w . x``.
    t_grid : array_like
        Uniform grid starting at 0.
    dt : float, optional
        RK4 step; must divide the grid spacing. Defaults to at most 0.01.
    method : {"auto", "propagator", "rk4"}
        ``propagator`` advances linear systems with the exact one-step matrix
        exponential; ``auto`` picks it whenever the system is linear.
    max_diverged : float
        Largest tolerated fraction of non-finite sample paths.

    Returns
    -------
    Trajectory
        Mean path with per-point standard errors ``std / sqrt(n)``.

    Raises
    ------
    UnreliableEstimate
        If more than ``max_diverged`` of the samples diverge.
    """
    if ensemble.unresolved != "normal":
        raise InvalidConfig("conditional_mean_path needs a normal unresolved ensemble")
    t, spacing = _uniform_grid(t_grid)
    if t[0] != 0.0:
        raise InvalidConfig("t_grid must start at 0")
    use_prop = method == "propagator" or (method == "auto" and system.is_linear)
    if method not in ("auto", "propagator", "rk4"):
        raise InvalidConfig("method must be 'auto', 'propagator' or 'rk4'")
    if np.ndim(observable) == 0:
        weights = np.zeros(system.dim)
        weights[int(observable)] = 1.0
        label = f"x{int(observable) + 1}"
    else:
        weights = np.asarray(observable, dtype=float)
        if weights.shape != (system.dim,):
            raise InvalidConfig("observable weights must have length dim")
        label = "w.x"
    if use_prop:
        if not system.is_linear:
            raise InvalidConfig("propagator method needs a linear system")
        E = expm(system.linear_matrix * spacing)
        rows = np.empty((t.size, system.dim))
        r = weights.copy()
        for k in range(t.size):
            rows[k] = r
            r = r @ E

    def block(b, n, seq):
        rng = np.random.default_rng(seq)
        X0 = ensemble.draw(rng, n)
        if use_prop:
            vals = X0 @ rows.T
        else:
            vals = _propagate_batch(system, X0, t, spacing, dt, lambda x: x @ weights)
        ok = np.all(np.isfinite(vals), axis=1)
        v = vals[ok]
        # deviations from a per-block pivot keep identical samples exact
        pivot = v[0] if v.shape[0] else np.zeros(t.size)
        dv = v - pivot
        return ok.size - ok.sum(), v.shape[0], pivot, dv.sum(axis=0), (dv * dv).sum(axis=0)

    parts = _map_blocks(block, ensemble.seed, _block_sizes(ensemble.n_samples))
    n_div = sum(p[0] for p in parts)
    n_ok = sum(p[1] for p in parts)
    if n_div > max_diverged * ensemble.n_samples or n_ok == 0:
        raise UnreliableEstimate(
            f"{n_div} of {ensemble.n_samples} samples diverged")
    p0 = next(p[2] for p in parts if p[1] > 0)
    d1 = np.zeros(t.size)
    d2 = np.zeros(t.size)
    for n_b, piv, s1, s2 in (p[1:] for p in parts):
        if n_b == 0:
            continue
        delta = piv - p0
        d1 += s1 + n_b * delta
        d2 += s2 + 2.0 * delta * s1 + n_b * delta * delta
    m1 = d1 / n_ok
    mean = p0 + m1
    var = np.maximum(d2 / n_ok - m1 * m1, 0.0) * n_ok / max(n_ok - 1, 1)
    se = np.sqrt(var / n_ok)
    meta = {"n_samples": ensemble.n_samples, "n_diverged": int(n_div), "seed": ensemble.seed,
            "method": "propagator" if use_prop else "rk4"}
    return Trajectory(0.0, spacing, mean, labels=[label], stderr=se, meta=meta)


@dataclass
class GibbsSamples:
    """Samples of ``e^{-beta H}/Z`` with sampler diagnostics."""

    samples: np.ndarray
    acceptance_rate: float = 1.0
    step: float = float("nan")
    method: str = "metropolis"
    meta: dict = field(default_factory=dict)


def metropolis_gibbs(hamiltonian: Callable, beta: float, dim: int, n_samples: int,
                     burn_in: int = 10_000, thinning: int = 10, seed: int = 0, *,
                     chains_per_block: int = 250, n_chains: Optional[int] = None,
                     target: float = 0.4, tune_every: int = 100,
                     step: Optional[float] = None) -> GibbsSamples:
    """Random-walk Metropolis sampling of ``e^{-beta H}/Z``.

    Independent chains start from ``N(0, 1/beta)`` draws and are advanced in
    vectorized blocks. During burn-in the isotropic Gaussian step is rescaled
    every ``tune_every`` moves by ``exp(acceptance - target)``; it is frozen
    afterwards.

    Parameters
    ----------
    hamiltonian : callable
        ``H(x)`` on the last axis; bounded below.
    beta : float
    dim : int
    n_samples : int
    burn_in, thinning : int
    seed : int
    chains_per_block : int
        Chains sharing one random stream.
    n_chains : int, optional
        Total chains. Defaults to ``min(n_samples, 1000)``.
    target : float
        Target acceptance rate during tuning.
    step : float, optional
        Initial proposal scale, ``1/sqrt(beta)`` by default.

    Returns
    -------
    GibbsSamples
        ``samples`` has shape ``(n_samples, dim)``, ordered by chain.

    Warns
    -----
    TuningWarning
        If the post-burn-in acceptance rate lies outside ``[0.1, 0.9]``.
    """
    if beta <= 0 or n_samples < 1 or dim < 1 or thinning < 1 or burn_in < 0:
        raise InvalidConfig("beta, n_samples, dim and thinning must be positive")
    n_chains = min(n_samples, 1000) if n_chains is None else int(n_chains)
    per_chain = math.ceil(n_samples / n_chains)
    step0 = 1.0 / math.sqrt(beta) if step is None else float(step)

    def block(b, m, seq):
        rng = np.random.default_rng(seq)
        x = rng.standard_normal((m, dim)) / math.sqrt(beta)
        hx = beta * hamiltonian(x)
        s = step0
        acc_win = 0.0
        for it in range(burn_in):
            y = x + s * rng.standard_normal(x.shape)
            hy = beta * hamiltonian(y)
            a = np.log(rng.random(m)) < hx - hy
            x[a] = y[a]
            hx[a] = hy[a]
            acc_win += a.mean()
            if (it + 1) % tune_every == 0:
                s *= math.exp(acc_win / tune_every - target)
                acc_win = 0.0
        out = np.empty((per_chain, m, dim))
        n_acc = 0
        for j in range(per_chain):
            for _ in range(thinning):
                y = x + s * rng.standard_normal(x.shape)
                hy = beta * hamiltonian(y)
                a = np.log(rng.random(m)) < hx - hy
                x[a] = y[a]
                hx[a] = hy[a]
                n_acc += int(a.sum())
            out[j] = x
        # chain-major ordering
        return out.transpose(1, 0, 2).reshape(-1, dim), n_acc / (per_chain * thinning * m), s

    parts = _map_blocks(block, seed, _block_sizes(n_chains, chains_per_block))
    samples = np.concatenate([p[0] for p in parts])[:n_samples]
    weights = np.array(_block_sizes(n_chains, chains_per_block), dtype=float)
    acc = float(np.dot(weights, [p[1] for p in parts]) / weights.sum())
    steps = [p[2] for p in parts]
    if not np.all(np.isfinite(samples)):
        raise NumericalFailure("non-finite Metropolis samples")
    if not 0.1 <= acc <= 0.9:
        warnings.warn(f"Metropolis acceptance rate {acc:.3f} outside [0.1, 0.9]", TuningWarning)
    return GibbsSamples(samples, acc, float(np.mean(steps)), "metropolis",
                        {"burn_in": burn_in, "thinning": thinning, "n_chains": n_chains,
                         "block_steps": steps, "seed": seed})


def gaussian_gibbs(precision: np.ndarray, beta: float, n_samples: int, seed: int = 0) -> GibbsSamples:
    """Exact samples of ``e^{-beta x^T Q x / 2}/Z`` for a positive-definite ``Q``.

    Uses ``x = L^{-T} z / sqrt(beta)`` with ``Q = L L^T``.
    """
    Q = np.asarray(precision, dtype=float)
    if beta <= 0 or n_samples < 1:
        raise InvalidConfig("beta and n_samples must be positive")
    try:
        L = cholesky(0.5 * (Q + Q.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise InvalidConfig("quadratic form is not positive definite") from exc
    dim = Q.shape[0]

    def block(b, n, seq):
        z = np.random.default_rng(seq).standard_normal((n, dim))
        return solve_triangular(L, z.T, lower=True, trans="T").T / math.sqrt(beta)

    parts = _map_blocks(block, seed, _block_sizes(n_samples))
    return GibbsSamples(np.concatenate(parts), 1.0, float("nan"), "gaussian", {"seed": seed})


def _quadratic_form(system: DynamicalSystem) -> Optional[np.ndarray]:
    """Hessian of a Hamiltonian that is exactly quadratic, else None."""
    if system.grad_hamiltonian is None or system.hamiltonian is None:
        return None
    n = system.dim
    Q = np.asarray(system.grad_hamiltonian(np.eye(n)), dtype=float).T
    probe = np.random.default_rng(12345).standard_normal((3, n))
    if not np.allclose(system.hamiltonian(probe), 0.5 * np.einsum("ki,ij,kj->k", probe, Q, probe),
                       rtol=1e-10, atol=1e-12):
        return None
    return 0.5 * (Q + Q.T)


def gibbs_samples(system: DynamicalSystem, beta: float, n_samples: int, seed: int = 0, *,
                  method: str = "auto", **mh_kwargs) -> GibbsSamples:
    """Equilibrium samples of a Hamiltonian system.

    ``auto`` samples exactly when the Hamiltonian is quadratic and falls back
    to :func:`metropolis_gibbs` otherwise.
    """
    if system.hamiltonian is None:
        raise InvalidConfig("system has no Hamiltonian")
    if method not in ("auto", "gaussian", "metropolis"):
        raise InvalidConfig("method must be 'auto', 'gaussian' or 'metropolis'")
    Q = _quadratic_form(system) if method != "metropolis" else None
    if method == "gaussian" and Q is None:
        raise InvalidConfig("Hamiltonian is not quadratic")
    if Q is not None:
        return gaussian_gibbs(Q, beta, n_samples, seed)
    return metropolis_gibbs(system.hamiltonian, beta, system.dim, n_samples, seed=seed, **mh_kwargs)


def equilibrium_autocorrelation(system: DynamicalSystem, samples, observable: int, t_grid, *,
                                dt: Optional[float] = None, origin_window: float = 0.0,
                                origin_stride: int = 1, method: str = "auto") -> Trajectory:
    """Normalized autocorrelation ``C(t) = <u(0)u(t)> / <u(0)^2>``.

    Each equilibrium sample is evolved and the products averaged. With
    ``origin_window > 0`` the trajectories run ``origin_window`` longer and
    products are also averaged over time origins in ``[0, origin_window]``,
    which stationarity of the invariant ensemble permits.

    Parameters
    ----------
    system : DynamicalSystem
    samples : ndarray or GibbsSamples
    observable : int
        Zero-based component index.
    t_grid : array_like
        Uniform grid starting at 0.
    dt : float, optional
        RK4 step for nonlinear systems.
    origin_window : float
        Length of the time-origin window, a multiple of the grid spacing.
    origin_stride : int
        Spacing of time origins in grid steps.
    method : {"auto", "propagator", "rk4"}

    Returns
    -------
    Trajectory
        ``C`` with ``C(0) = 1`` and standard errors of the sample mean.

    Raises
    ------
    DegenerateObservable
        If ``<u(0)^2> = 0``.
    """
    X = samples.samples if isinstance(samples, GibbsSamples) else np.asarray(samples, dtype=float)
    t, spacing = _uniform_grid(t_grid)
    if t[0] != 0.0:
        raise InvalidConfig("t_grid must start at 0")
    n_orig = int(round(origin_window / spacing))
    if abs(n_orig * spacing - origin_window) > 1e-9 * max(1.0, origin_window):
        raise InvalidConfig("origin_window must be a multiple of the grid spacing")
    m = t.size
    t_ext = spacing * np.arange(m + n_orig)
    use_prop = method == "propagator" or (method == "auto" and system.is_linear)
    if use_prop:
        E = expm(system.linear_matrix * spacing)
        rows = np.empty((t_ext.size, system.dim))
        r = np.zeros(system.dim)
        r[observable] = 1.0
        for k in range(t_ext.size):
            rows[k] = r
            r = r @ E
    origins = np.arange(0, n_orig + 1, max(1, int(origin_stride)))

    def block(b, n, seq):
        Xb = X[b * BLOCK_SIZE: b * BLOCK_SIZE + n]
        if use_prop:
            u = Xb @ rows.T
        else:
            u = _propagate_batch(system, Xb, t_ext, spacing, dt, lambda x: x[..., observable])
        if not np.all(np.isfinite(u)):
            raise UnreliableEstimate("equilibrium trajectory diverged")
        prod = np.zeros((n, m))
        norm = np.zeros(n)
        for o in origins:
            prod += u[:, o:o + m] * u[:, o:o + 1]
            norm += u[:, o] ** 2
        prod /= origins.size
        norm /= origins.size
        return prod.sum(axis=0), (prod * prod).sum(axis=0), norm.sum()

    parts = _map_blocks(block, 0, _block_sizes(X.shape[0]))
    n = X.shape[0]
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    s0 = 0.0
    for p in parts:
        s1 += p[0]
        s2 += p[1]
        s0 += p[2]
    if s0 <= 0.0:
        raise DegenerateObservable("<u(0)^2> vanishes")
    mean = s1 / n
    var = np.maximum(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    c0 = s0 / n
    C = mean / c0
    C[0] = 1.0
    se = np.sqrt(var / n) / c0
    meta = {"n_samples": n, "origins": int(origins.size), "method": "propagator" if use_prop else "rk4"}
    return Trajectory(0.0, spacing, C, labels=[f"C_x{observable + 1}"], stderr=se, meta=meta)


def _as_observable(f) -> Callable:
    if callable(f):
        return f
    idx = int(f)
    return lambda x: x[:, idx]


def equilibrium_norm_ratio(system_or_hamiltonian: Union[DynamicalSystem, Callable], beta: float,
                           numerator, denominator, n_samples: int, seed: int = 0, *,
                           dim: Optional[int] = None, samples=None, n_batches: int = 20,
                           **sampler_kwargs):
    """Monte-Carlo estimate of ``||f||^2_eq / ||g||^2_eq`` with a batch-means error bar.

    Parameters
    ----------
    system_or_hamiltonian : DynamicalSystem or callable
        A system (sampled by :func:`gibbs_samples`) or a bare Hamiltonian
        (sampled by :func:`metropolis_gibbs`, requires ``dim``).
    beta : float
    numerator, denominator : int or callable
        Component index or map ``(n, dim) -> (n,)``.
    n_samples : int
    seed : int
    samples : ndarray or GibbsSamples, optional
        Reuse existing samples instead of drawing.
    n_batches : int
        Contiguous batches for the error bar.

    Returns
    -------
    (float, float)
        Ratio and its standard error.
    """
    if samples is None:
        if isinstance(system_or_hamiltonian, DynamicalSystem):
            samples = gibbs_samples(system_or_hamiltonian, beta, n_samples, seed, **sampler_kwargs)
        else:
            if dim is None:
                raise InvalidConfig("dim is required with a bare Hamiltonian")
            samples = metropolis_gibbs(system_or_hamiltonian, beta, dim, n_samples, seed=seed,
                                       **sampler_kwargs)
    X = samples.samples if isinstance(samples, GibbsSamples) else np.asarray(samples, dtype=float)
    f2 = _as_observable(numerator)(X) ** 2
    g2 = _as_observable(denominator)(X) ** 2
    if np.sum(g2) == 0.0:
        raise DegenerateObservable("denominator vanishes")
    ratio = float(np.sum(f2) / np.sum(g2))
    nb = max(2, min(n_batches, X.shape[0]))
    idx = np.array_split(np.arange(X.shape[0]), nb)
    # delta-method error from batch means of (f^2, g^2)
    bf = np.array([f2[i].mean() for i in idx])
    bg = np.array([g2[i].mean() for i in idx])
    resid = (bf - ratio * bg) / bg.mean()
    se = float(np.std(resid, ddof=1) / math.sqrt(nb))
    return ratio, se
