"""Monte Carlo ensembles of trajectories and their statistics.

Realizations are cut into fixed blocks of ``BLOCK_SIZE`` indices.  Each block
returns per-time mean and sum of squared deviations, and blocks are merged
in index order with the pairwise update of Chan et al.  Because the block
layout does not depend on how many workers run them, the result is
bit-identical for any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import Scenario
from .sde import propagate_block

BLOCK_SIZE = 250
DEFAULT_BINS = 20
RANGE_TOL = 1e-9
CONVERGENCE_FLOOR = 1e-4        # absolute tolerance when the standard error vanishes


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def histogram(values, bins: int = DEFAULT_BINS) -> Histogram:
    """Counts of ``values`` in ``bins`` uniform bins on ``[0, 1]``.

    The last bin is closed on the right.  Values outside
    ``[-1e-9, 1 + 1e-9]`` are rejected; rounding excursions inside that
    tolerance are clipped onto the interval.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    v = np.asarray(values, dtype=float).ravel()
    bad = ~np.isfinite(v) | (v < -RANGE_TOL) | (v > 1.0 + RANGE_TOL)
    if np.any(bad):
        raise ValueError(f"value {v[bad][0]!r} outside [0, 1]")
    counts, edges = np.histogram(np.clip(v, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return Histogram(edges, counts)


def stats_reduce(trajectories):
    """Pointwise mean and population standard deviation of equal-grid series.

    ``trajectories`` is a sequence of 1-d arrays, or of objects with
    ``times`` and ``survival`` attributes (whose grids must coincide).
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories to reduce")
    if hasattr(trajectories[0], "survival"):
        t0 = trajectories[0].times
        for tr in trajectories[1:]:
            if tr.times.shape != t0.shape or not np.array_equal(tr.times, t0):
                raise ValueError("trajectories are on different time grids")
        series = [tr.survival for tr in trajectories]
    else:
        series = [np.asarray(s, dtype=float) for s in trajectories]
        if len({s.shape for s in series}) != 1:
            raise ValueError("trajectories are on different time grids")
    data = np.stack(series)
    return data.mean(axis=0), data.std(axis=0)


@dataclass
class Moments:
    """Running count, mean and sum of squared deviations per time sample."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Moments(n, mean, m2)


@dataclass
class BlockResult:
    start: int
    moments: Moments
    terminal: np.ndarray
    paths: np.ndarray | None = None
    renorm_correction: float = 0.0


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: int
    histogram: Histogram
    terminal: np.ndarray
    paths: np.ndarray | None = field(default=None, repr=False)
    renorm_correction: float = 0.0      # largest norm deviation removed per step

    @property
    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(self.n)


def _run_block(scenario: Scenario, start: int, stop: int, level: int, keep_paths: bool) -> BlockResult:
    n_b = stop - start
    n_t = scenario.grid.n_steps + 1
    mean = np.empty(n_t)
    m2 = np.empty(n_t)
    mean[0], m2[0] = 1.0, 0.0       # every path starts in state b
    paths = np.empty((n_b, n_t)) if keep_paths else None
    if paths is not None:
        paths[:, 0] = 1.0
    last = None
    worst = np.zeros(1)
    for j0, states in propagate_block(scenario, range(start, stop), level, diagnostics=worst):
        pb = np.abs(states[:, :, 0]) ** 2
        cols = slice(j0 + 1, j0 + 1 + pb.shape[1])
        mu = pb.mean(axis=0)
        mean[cols] = mu
        m2[cols] = ((pb - mu) ** 2).sum(axis=0)
        if paths is not None:
            paths[:, cols] = pb
        last = pb[:, -1]
    return BlockResult(start, Moments(n_b, mean, m2), last.copy(), paths, float(worst[0]))


def _blocks(n: int, size: int):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_ensemble(scenario: Scenario, workers: int = 1, level: int = 0, keep_paths: bool = False,
                 bins: int = DEFAULT_BINS, block_size: int = BLOCK_SIZE) -> EnsembleStats:
    """Integrate ``scenario.n_realizations`` trajectories and reduce them.

    Parameters
    ----------
    workers : int
        Processes to use; ``1`` runs in the calling process.  Output does
        not depend on this value.
    level : int
        Step refinement, ``dt / 2**level`` on the same noise paths.
    keep_paths : bool
        Retain every ``P_b`` series (memory grows as ``N * n_steps``).
    """
    blocks = _blocks(scenario.n_realizations, block_size)
    args = [(scenario, a, b, level, keep_paths) for a, b in blocks]
    if workers <= 1 or len(blocks) == 1:
        results = [_run_block(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, *zip(*args)))
    total = results[0].moments
    for r in results[1:]:
        total = total.merge(r.moments)
    std = np.sqrt(np.maximum(total.m2 / total.count, 0.0))
    terminal = np.concatenate([r.terminal for r in results])
    paths = np.concatenate([r.paths for r in results]) if keep_paths else None
    return EnsembleStats(scenario.grid.times, total.mean, std, total.count,
                         histogram(terminal, bins), terminal, paths,
                         max(r.renorm_correction for r in results))


@dataclass(frozen=True)
class ConvergenceReport:
    terminal_diff: float
    terminal_stderr: float
    max_diff: float
    passed: bool

    def as_dict(self) -> dict:
        return {"terminal_diff": self.terminal_diff, "terminal_stderr": self.terminal_stderr,
                "max_diff": self.max_diff, "passed": self.passed}


def convergence_check(coarse: EnsembleStats, fine: EnsembleStats) -> ConvergenceReport:
    """Compare runs at ``dt`` and ``dt / 2`` on the same noise paths.

    Passes when the terminal means differ by less than the Monte Carlo
    standard error of the coarse run (or ``CONVERGENCE_FLOOR`` if larger,
    which only matters for noise-free or single-path runs).
    """
    if coarse.mean.shape != fine.mean.shape:
        raise ValueError("convergence runs must share the sample grid")
    diff = np.abs(coarse.mean - fine.mean)
    se = float(coarse.stderr[-1])
    return ConvergenceReport(float(diff[-1]), se, float(diff.max()),
                             bool(diff[-1] <= max(se, CONVERGENCE_FLOOR)))


__all__ = [
    "BLOCK_SIZE", "DEFAULT_BINS", "Histogram", "histogram", "stats_reduce", "Moments",
    "EnsembleStats", "run_ensemble", "ConvergenceReport", "convergence_check",
]
