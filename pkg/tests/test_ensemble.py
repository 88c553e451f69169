import numpy as np
import pytest
from hypothesis import given, strategies as st

from twolevel.core import TimeGrid
from twolevel.ensemble import (
    Histogram, Moments, convergence_check, histogram, run_ensemble, stats_reduce,
)
from twolevel.master import integrate_schrodinger
from twolevel.model import Frame, NoiseModel, PhysicalParams, Scenario
from twolevel.sde import integrate_trajectory


def scenario(noise=None, n=8, t_final=2.0, frame="lab", seed=7):
    return Scenario(PhysicalParams(1.0, 0.2), Frame(frame), noise or NoiseModel(),
                    TimeGrid(t_final, 1e-3), n, seed)


def test_histogram_examples():
    h = histogram([0.0, 0.5, 1.0], bins=2)
    assert np.array_equal(h.counts, [1, 2])
    assert np.allclose(h.edges, [0.0, 0.5, 1.0])
    assert histogram([-1e-12, 1 + 1e-12], bins=4).total == 2
    assert histogram(np.linspace(0, 1, 1000), bins=20).total == 1000


@pytest.mark.parametrize("bad", [1.5, -0.1, np.nan])
def test_histogram_rejects_out_of_range(bad):
    with pytest.raises(ValueError, match="outside"):
        histogram([0.2, bad])
    with pytest.raises(ValueError):
        histogram([0.2], bins=0)


def test_stats_reduce_examples():
    mean, std = stats_reduce([np.zeros(3), np.ones(3)])
    assert np.allclose(mean, 0.5) and np.allclose(std, 0.5)
    mean, std = stats_reduce([np.full(4, 0.3)])
    assert np.all(std == 0.0)
    with pytest.raises(ValueError, match="grid"):
        stats_reduce([np.zeros(3), np.zeros(4)])
    with pytest.raises(ValueError):
        stats_reduce([])


def test_stats_reduce_checks_trajectory_grids():
    a = integrate_trajectory(scenario(t_final=1.0))
    b = integrate_trajectory(scenario(t_final=1.0).with_(grid=TimeGrid(1.0, 2e-3)))
    with pytest.raises(ValueError, match="grid"):
        stats_reduce([a, b])
    mean, std = stats_reduce([a, a])
    assert np.array_equal(mean, a.survival) and np.all(std == 0.0)


@given(st.lists(st.lists(st.floats(0, 1), min_size=5, max_size=5), min_size=1, max_size=30))
def test_std_never_exceeds_popoviciu_bound(rows):
    _, std = stats_reduce([np.array(r) for r in rows])
    assert np.all(std <= 0.5 + 1e-12)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.integers(1, 39))
def test_moment_merge_matches_direct(values, cut):
    x = np.array(values)
    cut = min(cut, len(x) - 1)

    def mom(v):
        return Moments(len(v), np.array([v.mean()]), np.array([((v - v.mean()) ** 2).sum()]))

    m = mom(x[:cut]).merge(mom(x[cut:]))
    assert m.count == len(x)
    assert m.mean[0] == pytest.approx(x.mean(), abs=1e-12)
    assert m.m2[0] / m.count == pytest.approx(x.var(), abs=1e-12)


def test_single_realization_has_zero_spread():
    stats = run_ensemble(scenario(NoiseModel.white(0.1), n=1))
    assert np.all(stats.std == 0.0)
    tr = integrate_trajectory(scenario(NoiseModel.white(0.1), n=1))
    assert np.array_equal(stats.mean, tr.survival)


def test_noise_free_ensemble_matches_schrodinger():
    stats = run_ensemble(scenario(n=3))
    ref = integrate_schrodinger(scenario()).survival
    assert np.max(np.abs(stats.mean - ref)) < 1e-6
    assert np.max(stats.std) < 1e-15


def test_ensemble_matches_direct_reduction():
    s = scenario(NoiseModel.white(0.1), n=7)
    stats = run_ensemble(s, keep_paths=True, block_size=3)
    mean, std = stats_reduce([integrate_trajectory(s, r).survival for r in range(7)])
    assert np.allclose(stats.mean, mean, atol=1e-14)
    assert np.allclose(stats.std, std, atol=1e-12)
    assert np.array_equal(stats.paths[:, -1], stats.terminal)
    assert stats.histogram.total == 7
    assert isinstance(stats.histogram, Histogram)


@pytest.mark.parametrize("noise", [NoiseModel.white(0.1), NoiseModel.ou(1.0, 0.1, "x")])
def test_worker_count_does_not_change_output(noise):
    s = scenario(noise, n=9, t_final=1.0)
    a = run_ensemble(s, workers=1, block_size=2)
    b = run_ensemble(s, workers=3, block_size=2)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.std, b.std)
    assert np.array_equal(a.terminal, b.terminal)


def test_standard_error_scales_inverse_sqrt_n():
    s = scenario(NoiseModel.white(0.1), t_final=20.0)
    se = [run_ensemble(s.with_(n_realizations=n)).stderr[-1] for n in (100, 400)]
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.25)


def test_convergence_check_on_refined_paths():
    s = scenario(NoiseModel.ou(1.0, 0.1, "x"), n=20, t_final=2.0)
    rep = convergence_check(run_ensemble(s), run_ensemble(s, level=1))
    assert rep.passed
    assert rep.terminal_diff < 1e-4
    with pytest.raises(ValueError):
        convergence_check(run_ensemble(s), run_ensemble(s.with_(grid=TimeGrid(1.0, 1e-3))))
