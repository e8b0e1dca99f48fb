import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cbext.errors import NotExtinct, PathNeverPositive
from cbext.lamperti import (
    TimeChangedPath,
    exact_feller_sampler,
    future_infimum,
    reflect_at_infimum,
    reverse_at_extinction,
    simulate_cb_path,
    simulate_ensemble,
    time_change,
)
from cbext.paths import AdaptiveLamperti, RelativeMove, SamplePath, simulate_path


def _fixture_tc(values, times=None):
    values = np.asarray(values, dtype=float)
    times = np.arange(values.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    t0 = times[-1] if values[-1] == 0 else math.inf
    return TimeChangedPath(times, values, t0)


def test_constant_fixture():
    t = np.linspace(0, 1, 11)
    tc = time_change(SamplePath.from_arrays(t, np.full(11, 2.0)))
    assert np.allclose(tc.cb_times, t / 2.0, rtol=1e-14)
    assert np.all(tc.cb_values == 2.0)
    assert not tc.extinct and tc.extinction_time == math.inf


def _linear_tc(dt=1e-4):
    t = np.arange(0, 1 + dt / 2, dt)
    return time_change(SamplePath.from_arrays(t, 1.0 - t))


def test_linear_fixture():
    tc = _linear_tc()
    assert tc.value_at(1.0) == pytest.approx(math.exp(-1), abs=1e-6)
    # A_t = log(x0 / (x0 - t)) away from the end
    i = 5000
    assert tc.cb_times[i] == pytest.approx(math.log(1 / (1 - tc.levy_times[i])), rel=1e-7)
    assert tc.extinct and tc.extinction_time >= tc.cb_times[-2]


def test_reverse_fixture():
    rp = reverse_at_extinction(_fixture_tc([1.0, 0.5, 0.0]))
    assert rp.s.tolist() == [0.0, 1.0, 2.0]
    assert rp.values.tolist() == [0.0, 0.5, 1.0]


def test_reverse_linear_fixture():
    tc = _linear_tc()
    rp = reverse_at_extinction(tc)
    t0 = tc.extinction_time
    mid = slice(2000, None)  # skip the last fifth, where the trapezoid clock error grows like dt^2/x^2
    assert np.allclose(rp.values[mid], np.exp(-(t0 - rp.s[mid])), rtol=1e-6)


def test_reverse_requires_extinction():
    with pytest.raises(NotExtinct):
        reverse_at_extinction(_fixture_tc([1.0, 0.5, 0.2]))
    with pytest.raises(NotExtinct):
        reflect_at_infimum(_fixture_tc([1.0, 0.5, 0.2]))


def test_never_positive():
    with pytest.raises(PathNeverPositive):
        time_change(SamplePath(np.array([0.0, 1.0]), np.array([0.0, 1.0])))


def test_reflect_fixtures():
    dec = reflect_at_infimum(_fixture_tc([3.0, 2.0, 1.0, 0.0]))
    assert np.all(dec.values == 0.0)
    r = reflect_at_infimum(_fixture_tc([1.0, 2.0, 0.5, 0.0]))
    assert r.values[::-1].tolist() == [0.0, 1.0, 0.0, 0.0]


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=30))
def test_reflected_bounded(vals):
    y = np.append(vals, 0.0)
    tc = _fixture_tc(y)
    refl = reflect_at_infimum(tc).values[::-1]
    assert np.all(refl <= y - y.min() + 1e-15)


def test_future_infimum_fixtures():
    assert future_infimum(np.array([3.0, 1.0, 2.0, 0.0])).tolist() == [0.0, 0.0, 0.0, 0.0]
    assert future_infimum(np.array([3.0, 1.0, 2.0])).tolist() == [1.0, 1.0, 2.0]


@given(st.lists(st.floats(0.0, 10), min_size=1, max_size=30))
def test_future_infimum_properties(vals):
    y = np.array(vals)
    j = future_infimum(y)
    assert np.all(j <= y)
    assert np.all(np.diff(j) >= 0)


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=30))
def test_reversal_preserves_values(vals):
    y = np.append(vals, 0.0)
    rp = reverse_at_extinction(_fixture_tc(y))
    assert sorted(rp.values.tolist()) == sorted(y.tolist())


def test_predecessor_lookup():
    rp = reverse_at_extinction(_fixture_tc([1.0, 0.5, 0.0]))
    assert rp.value_at(0.999999) == 0.0
    assert rp.value_at(1.0 - 1e-13) == 0.5  # within the grid tolerance
    assert rp.value_at(1.5) == 0.5


def test_clock_consistency(stable):
    p = simulate_path(stable, 1.0, AdaptiveLamperti(1e-3), seed=8)
    tc = time_change(p)
    n = tc.levy_times.size
    assert np.all(np.diff(tc.cb_times) > 0)
    assert np.allclose(tc.theta(tc.cb_times[:n]), tc.levy_times, rtol=0, atol=1e-9)
    assert np.all(tc.cb_values >= 0) and tc.cb_values[-1] == 0.0
    assert tc.extinction_time >= tc.cb_times[-1]


def test_direct_cb_path_matches_time_change(quadratic):
    p = simulate_path(quadratic, 1.0, AdaptiveLamperti(1e-3), seed=21, index=3)
    a = time_change(p)
    b = simulate_cb_path(quadratic, 1.0, AdaptiveLamperti(1e-3), seed=21, index=3)
    assert a.extinction_time == pytest.approx(b.extinction_time, rel=1e-9)
    assert np.array_equal(a.cb_values, b.cb_values)


def test_feller_sampler_oracles(rng):
    y = exact_feller_sampler(1.0, 1.0, 1.0, rng, size=100_000)
    assert np.mean(y == 0) == pytest.approx(math.exp(-1), abs=4 * math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / 1e5))
    assert abs(y.mean() - 1.0) <= 3 * y.std(ddof=1) / math.sqrt(y.size)
    e = np.exp(-y)
    assert abs(e.mean() - math.exp(-0.5)) <= 3 * e.std(ddof=1) / math.sqrt(y.size)


def test_feller_marginal_small(quadratic, rng):
    ens = simulate_ensemble(quadratic, 1.0, 2000, AdaptiveLamperti(1e-3), seed=13, checkpoints=[0.5])
    exact = exact_feller_sampler(1.0, 0.5, 1.0, rng, size=100_000)
    assert stats.ks_2samp(ens.marginals[:, 0], exact).statistic < 0.04


def test_extinction_law_small(stable_kernel):
    m = stable_kernel.mechanism
    ens = simulate_ensemble(m, 1.0, 400, AdaptiveLamperti(1e-3), seed=17)
    assert np.all(np.isfinite(ens.extinction_times))
    d = stats.kstest(ens.extinction_times, lambda t: stable_kernel.extinction_cdf(1.0, t)).statistic
    assert d < 0.08
    summary = ens.summary()
    assert summary["n_paths"] == 400 and set(summary["T0_quantiles"]) >= {"q50"}


def test_ensemble_independent_of_workers(quadratic):
    a = simulate_ensemble(quadratic, 1.0, 30, AdaptiveLamperti(1e-2), seed=5, checkpoints=[0.3], workers=1)
    b = simulate_ensemble(quadratic, 1.0, 30, AdaptiveLamperti(1e-2), seed=5, checkpoints=[0.3], workers=2)
    assert a.extinction_times.tobytes() == b.extinction_times.tobytes()
    assert np.array_equal(a.marginals, b.marginals, equal_nan=True)


def test_deep_floor_path(stable):
    tc = simulate_cb_path(stable, 1.0, RelativeMove(1e-3), seed=1, floor_ratio=1e-12)
    assert tc.extinct
    positive = tc.cb_values[:-1]
    assert positive.min() < 1e-8
