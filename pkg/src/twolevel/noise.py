"""Reproducible random streams, Wiener increments and Ornstein-Uhlenbeck paths.

Every stream is keyed by ``(seed, realization, axis, level)`` and backed by a
Philox counter-based generator, so trajectories never share generator state
and an ensemble gives the same numbers however it is scheduled.

``level`` is a refinement index.  Level 0 draws the path on the base grid; each
further level halves the step and fills in midpoints with a bridge conditioned
on the coarser path.  A run at ``dt / 2**L`` therefore sees the *same*
Brownian (or OU) path as the run at ``dt``, which is what makes half-step
convergence checks meaningful pathwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit


class RngStream:
    """Standard-normal source for one ``(seed, realization, axis, level)`` key."""

    __slots__ = ("key", "_gen")

    def __init__(self, seed: int, realization: int, axis: int, level: int = 0):
        self.key = (int(seed), int(realization), int(axis), int(level))
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(realization), int(axis), int(level)))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def normals(self, n: int | None = None):
        return self._gen.standard_normal(n)

    def __repr__(self):
        return f"RngStream(seed={self.key[0]}, realization={self.key[1]}, axis={self.key[2]}, level={self.key[3]})"


def wiener_increment(stream: RngStream, dt: float, n: int | None = None):
    """Draw Normal(0, dt) increment(s) from ``stream``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return math.sqrt(dt) * stream.normals(n)


# --------------------------------------------------------------------------
# Ornstein-Uhlenbeck process

@dataclass(frozen=True)
class OUState:
    value: float
    theta: float
    w0: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")


def ou_coefficients(theta: float, w0: float, dt: float) -> tuple[float, float]:
    """``(decay, scale)`` of the exact transition over ``dt``."""
    decay = math.exp(-theta * dt)
    scale = w0 * math.sqrt(-math.expm1(-2.0 * theta * dt) / (2.0 * theta))
    return decay, scale


def ou_exact_step(s: OUState, dt: float, z: float) -> OUState:
    """Exact Gaussian transition of ``dO = theta (mu - O) dt + w0 dW``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    decay, scale = ou_coefficients(s.theta, s.w0, dt)
    return replace(s, value=s.value * decay + s.mu * (1.0 - decay) + scale * z)


def ou_mean(t, o0: float, mu: float, theta: float):
    e = np.exp(-theta * np.asarray(t, dtype=float))
    return o0 * e + mu * (1.0 - e)


def ou_autocovariance(t, t_prime, theta: float, w0: float):
    """Covariance of ``O(t)`` and ``O(t')`` for a deterministic start.

    ``(w0^2 / 2 theta) (exp(-theta |t - t'|) - exp(-theta (t + t')))``,
    which tends to the stationary variance ``w0^2 / (2 theta)``.
    """
    t = np.asarray(t, dtype=float)
    tp = np.asarray(t_prime, dtype=float)
    if np.any(t < 0) or np.any(tp < 0):
        raise ValueError("times must be non-negative")
    return (w0**2 / (2.0 * theta)) * (np.exp(-theta * np.abs(t - tp)) - np.exp(-theta * (t + tp)))


@njit(cache=True)
def _ou_recursion(o0, decay, drift, scale, z, out):
    # out[..., 0] = o0; out[..., k+1] = out[..., k] * decay + drift + scale * z[..., k]
    n_rows, n_steps = z.shape
    for r in range(n_rows):
        v = o0[r]
        out[r, 0] = v
        for k in range(n_steps):
            v = v * decay + drift + scale * z[r, k]
            out[r, k + 1] = v


def ou_path(o0: np.ndarray, theta: float, w0: float, mu: float, dt: float, z: np.ndarray) -> np.ndarray:
    """Exact OU samples on a grid, rows are independent paths.

    ``z`` has shape ``(rows, n)``; returns ``(rows, n + 1)`` including ``o0``.
    Bit-identical to iterating :func:`ou_exact_step`.
    """
    decay, scale = ou_coefficients(theta, w0, dt)
    z = np.ascontiguousarray(z, dtype=float)
    out = np.empty((z.shape[0], z.shape[1] + 1))
    _ou_recursion(np.asarray(o0, dtype=float), decay, mu * (1.0 - decay), scale, z, out)
    return out


def ou_bridge_midpoints(left, right, theta: float, w0: float, mu: float, dt: float, z):
    """Midpoints of an exact OU path conditioned on its values ``dt`` apart."""
    a, s = ou_coefficients(theta, w0, 0.5 * dt)
    yl = left - mu
    yr = right - mu
    mean = a * (yl + yr) / (1.0 + a * a)
    return mu + mean + (s / math.sqrt(1.0 + a * a)) * z


def brownian_bridge_split(dw, dt: float, z):
    """Split increments over ``dt`` into two half-step increments summing to them."""
    half = 0.5 * dw
    spread = 0.5 * math.sqrt(dt) * z
    out = np.empty(dw.shape[:-1] + (2 * dw.shape[-1],))
    out[..., 0::2] = half + spread
    out[..., 1::2] = half - spread
    return out


def interleave(coarse, mids):
    """Merge node values ``(..., n+1)`` with midpoints ``(..., n)`` into ``(..., 2n+1)``."""
    out = np.empty(coarse.shape[:-1] + (2 * coarse.shape[-1] - 1,))
    out[..., 0::2] = coarse
    out[..., 1::2] = mids
    return out


class NoiseSource:
    """Chunked noise for a block of realizations and a set of axes.

    ``next_chunk(k)`` advances ``k`` base-grid steps and returns, at the
    refined step ``dt / 2**level``:

    * white noise: Wiener increments, shape ``(axes, block, k * 2**level)``;
    * OU noise: process values on the nodes, shape
      ``(axes, block, k * 2**level + 1)`` whose first column repeats the last
      column of the previous chunk.
    """

    def __init__(self, noise_model, seed: int, realizations, dt: float, level: int = 0):
        self.kind = noise_model.kind
        self.axes = noise_model.active_axes
        self.specs = [noise_model.axes[a] for a in self.axes]
        self.realizations = list(realizations)
        self.dt = float(dt)
        self.level = int(level)
        axis_ids = [("x", "y", "z").index(a) for a in self.axes]
        self.streams = [
            [[RngStream(seed, r, ax, lev) for r in self.realizations] for lev in range(self.level + 1)]
            for ax in axis_ids
        ]
        if self.kind == "ou":
            self._last = np.array([[spec.o0] * len(self.realizations) for spec in self.specs], dtype=float)

    def _draw(self, ai: int, lev: int, n: int) -> np.ndarray:
        return np.stack([s.normals(n) for s in self.streams[ai][lev]])

    def next_chunk(self, k: int) -> np.ndarray:
        if self.kind == "white":
            return np.stack([self._white(ai, k) for ai in range(len(self.axes))])
        if self.kind == "ou":
            out = np.stack([self._ou(ai, k) for ai in range(len(self.axes))])
            self._last = out[:, :, -1].copy()
            return out
        raise ValueError("noise model has no axes")

    def _white(self, ai, k):
        h = self.dt
        dw = math.sqrt(h) * self._draw(ai, 0, k)
        for lev in range(1, self.level + 1):
            dw = brownian_bridge_split(dw, h, self._draw(ai, lev, dw.shape[-1]))
            h *= 0.5
        return dw

    def _ou(self, ai, k):
        spec = self.specs[ai]
        h = self.dt
        path = ou_path(self._last[ai], spec.theta, spec.w0, spec.mu, h, self._draw(ai, 0, k))
        for lev in range(1, self.level + 1):
            z = self._draw(ai, lev, path.shape[-1] - 1)
            mids = ou_bridge_midpoints(path[:, :-1], path[:, 1:], spec.theta, spec.w0, spec.mu, h, z)
            path = interleave(path, mids)
            h *= 0.5
        return path


def sample_ou_paths(n_paths: int, theta: float, w0: float, dt: float, n_steps: int, seed: int,
                    mu: float = 0.0, o0: float = 0.0, axis: int = 0) -> np.ndarray:
    """Independent exact OU paths, one stream per path; shape ``(n_paths, n_steps + 1)``."""
    z = np.stack([RngStream(seed, r, axis).normals(n_steps) for r in range(n_paths)])
    return ou_path(np.full(n_paths, float(o0)), theta, w0, mu, dt, z)


@dataclass(frozen=True)
class OUMoments:
    variance: float
    lags: np.ndarray
    autocorrelation: np.ndarray
    decay_rate: float


def ou_stationary_moments(theta: float, w0: float, n_paths: int = 10_000, seed: int = 0,
                          dt: float = 0.01, burn_in: float = 20.0, max_lag: float = 2.0) -> OUMoments:
    """Stationary variance and fitted autocorrelation decay from independent paths.

    Each path starts at 0 and is run for ``burn_in`` (many correlation
    times), which supplies ``n_paths`` independent stationary samples.  The
    lag correlation is taken across paths and its log is fitted linearly.
    """
    n_burn = int(round(burn_in / dt))
    n_lag = int(round(max_lag / dt))
    paths = sample_ou_paths(n_paths, theta, w0, dt, n_burn + n_lag, seed)
    x0 = paths[:, n_burn]
    var = float(np.var(x0))
    lag_idx = np.arange(1, n_lag + 1, max(1, n_lag // 20))
    acf = np.array([np.corrcoef(x0, paths[:, n_burn + k])[0, 1] for k in lag_idx])
    lags = lag_idx * dt
    slope = np.polyfit(lags, np.log(acf), 1)[0]
    return OUMoments(var, lags, acf, float(-slope))
