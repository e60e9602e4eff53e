"""Fixed-step explicit Runge-Kutta integration and trajectory containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import Diverged, InvalidConfig

__all__ = ["Trajectory", "rk4", "rk4_step", "n_steps", "write_csv"]


@dataclass
class Trajectory:
    """Uniformly sampled time series.

    Parameters
    ----------
    t0 : float
        Time of the first row.
    dt : float
        Spacing between rows.
    values : ndarray, shape (steps + 1, dim)
        Sampled values.
    labels : list of str, optional
        One label per column.
    stderr : ndarray, optional
        Standard errors with the same shape as ``values``.
    """

    t0: float
    dt: float
    values: np.ndarray
    labels: Optional[list] = None
    stderr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float).reshape(self.values.shape)
        if self.dt <= 0:
            raise InvalidConfig("dt must be positive")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.shape[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def column(self, key) -> np.ndarray:
        """Return one column by index or label."""
        if isinstance(key, str):
            key = self.labels.index(key)
        return self.values[:, key]

    def to_csv(self, path, fmt="%.12e"):
        labels = self.labels or [f"x{i}" for i in range(self.dim)]
        cols = [self.t] + [self.values[:, i] for i in range(self.dim)]
        names = ["t"] + list(labels)
        if self.stderr is not None:
            cols += [self.stderr[:, i] for i in range(self.dim)]
            names += [f"{lab}_se" for lab in labels]
        write_csv(path, names, np.column_stack(cols), fmt=fmt)


def write_csv(path, header: Sequence[str], data, fmt="%.12e"):
    """Write a numeric table with a header row."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt)


def n_steps(t0: float, t1: float, dt: float) -> int:
    """Number of steps of size ``dt`` covering ``[t0, t1]`` exactly."""
    if dt <= 0:
        raise InvalidConfig("dt must be positive")
    n = int(round((t1 - t0) / dt))
    if n < 0 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise InvalidConfig(f"(t1 - t0)/dt = {(t1 - t0) / dt!r} is not an integer")
    return n


def rk4_step(rhs: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step. ``x`` may carry leading batch axes."""
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(rhs: Callable, x0, t0: float, t1: float, dt: float, *,
        record_every: int = 1, observe: Optional[Callable] = None,
        labels=None) -> Trajectory:
    """Integrate ``x' = rhs(t, x)`` with classical fixed-step RK4.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, x)`` returning an array shaped like ``x``.
    x0 : array_like
        Initial state.
    t0, t1 : float
        Integration interval. ``(t1 - t0) / dt`` must be an integer.
    dt : float
        Step size.
    record_every : int
        Keep every k-th state. The output spacing is ``k * dt``.
    observe : callable, optional
        Map applied to the state before recording, e.g. an ensemble mean.
    labels : list of str, optional

    Returns
    -------
    Trajectory

    Raises
    ------
    Diverged
        If the state becomes non-finite.
    """
    n = n_steps(t0, t1, dt)
    if n % record_every:
        raise InvalidConfig("record_every must divide the number of steps")
    obs = observe if observe is not None else (lambda x: np.ravel(x))
    x = np.array(x0, dtype=float)
    rows = [np.array(obs(x), dtype=float)]
    for i in range(n):
        t = t0 + i * dt
        x = rk4_step(rhs, t, x, dt)
        if not np.all(np.isfinite(x)):
            raise Diverged(t + dt)
        if (i + 1) % record_every == 0:
            rows.append(np.array(obs(x), dtype=float))
    return Trajectory(t0, dt * record_every, np.array(rows), labels=labels)
