"""Lamperti time change from Levy paths to CB paths, and the path
transformations used near extinction: reversal, reflection at the running
minimum and the future infimum.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEnsemble, NotExtinct, OutOfRange, PathNeverPositive
from .paths import (
    CROSSING,
    FLOOR,
    STOP_REASONS,
    AdaptiveLamperti,
    _simulate,
    floor_tail_clock,
    policy_to_dict,
)

GRID_TOL = 1e-12


@dataclass(frozen=True)
class TimeChangedPath:
    """A CB trajectory ``Y`` sampled on the Lamperti clock.

    ``extinction_time`` is ``inf`` when no extinction was detected.  When
    the source stopped at a floor, the last node ``(extinction_time, 0)`` is
    appended after the estimated residual clock.
    """

    cb_times: np.ndarray
    cb_values: np.ndarray
    extinction_time: float
    levy_times: np.ndarray | None = None
    source: dict = field(default_factory=dict, compare=False)

    @property
    def extinct(self):
        return bool(self.cb_values[-1] == 0.0)

    def value_at(self, s, mode="interp"):
        """``Y`` at CB time ``s``: linear interpolation or the left grid value."""
        s = np.asarray(s, dtype=float)
        if mode == "interp":
            out = np.interp(s, self.cb_times, self.cb_values, right=0.0 if self.extinct else np.nan)
        elif mode == "left":
            idx = np.searchsorted(self.cb_times, s + GRID_TOL, side="right") - 1
            out = self.cb_values[np.clip(idx, 0, None)]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return out if out.ndim else float(out)

    def theta(self, s):
        """Right-continuous inverse of the clock, realised on the grid."""
        if self.levy_times is None:
            raise ValueError("no Levy clock recorded for this path")
        n = self.levy_times.size
        return np.interp(s, self.cb_times[:n], self.levy_times)


def time_change(p):
    """Apply ``A_t = int_0^t ds / X_s`` (trapezoid rule) to a sample path.

    A last step that crosses zero is cut at the linearly interpolated
    crossing; its clock contribution uses a square-root approach to zero,
    ``2 h / x``, since a linear approach makes the integral diverge.
    """
    t = np.asarray(p.times, dtype=float)
    x = np.asarray(p.values, dtype=float)
    if not x[0] > 0:
        raise PathNeverPositive("time change needs a path that starts above 0")
    nonpos = np.flatnonzero(x <= 0)
    end = int(nonpos[0]) if nonpos.size else x.size
    t_pos, x_pos = t[:end], x[:end]
    clock = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t_pos) * (1.0 / x_pos[:-1] + 1.0 / x_pos[1:]))])
    source = {"seed": getattr(p, "seed", None), **getattr(p, "meta", {})}
    if nonpos.size:
        dt = t[end] - t[end - 1]
        h = dt * x[end - 1] / (x[end - 1] - x[end])
        t0 = clock[-1] + 2.0 * h / x[end - 1]
        cb_t = np.append(clock, t0)
        cb_x = np.append(x_pos, 0.0)
        levy = np.append(t_pos, t[end - 1] + h)
        return TimeChangedPath(cb_t, cb_x, float(t0), levy, source)
    if getattr(p, "stop_reason", None) == "floor":
        t0 = clock[-1] + p.tail_clock
        return TimeChangedPath(np.append(clock, t0), np.append(x_pos, 0.0), float(t0), t_pos, source)
    return TimeChangedPath(clock, x_pos.copy(), math.inf, t_pos, source)


def exact_feller_sampler(x, t, beta, rng, size=None):
    """Exact draw of ``Y_t`` under ``psi(lam) = beta lam^2`` started at ``x``.

    Poisson(``x/(beta t)``) many independent exponentials of mean ``beta t``;
    zero when the Poisson count is zero.
    """
    if not beta > 0:
        raise OutOfRange("beta", beta, "beta > 0")
    if not (x >= 0 and t > 0):
        raise OutOfRange("x, t", (x, t), "x >= 0 and t > 0")
    n = rng.poisson(x / (beta * t), size)
    out = np.where(n > 0, rng.gamma(np.maximum(n, 1), beta * t), 0.0)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ReversedPath:
    """``s -> Y_{(T0 - s)-}`` on the reversed grid ``s = T0 - cb_times``."""

    s: np.ndarray
    values: np.ndarray

    def value_at(self, s):
        """Value at the last grid point ``<= s`` (up to a 1e-12 tolerance)."""
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.s, s + GRID_TOL, side="right") - 1
        if np.any(idx < 0):
            raise OutOfRange("s", s, "s >= 0")
        out = self.values[idx]
        return out if out.ndim else float(out)

    def to_csv_rows(self):
        return [("s", "value")] + list(zip(self.s.tolist(), self.values.tolist()))


def _reverse(tc, values):
    if not tc.extinct:
        raise NotExtinct("path did not reach 0; nothing to reverse")
    s = tc.extinction_time - tc.cb_times[::-1]
    s[0] = 0.0
    return ReversedPath(s, np.asarray(values, dtype=float)[::-1].copy())


def reverse_at_extinction(tc):
    return _reverse(tc, tc.cb_values)


def reflect_at_infimum(tc):
    """Reverse ``Y - running_min(Y)`` from the extinction time."""
    y = tc.cb_values
    return _reverse(tc, y - np.minimum.accumulate(y))


def future_infimum(tc):
    """Suffix minimum ``J_t = inf_{s >= t} Y_s``."""
    y = np.asarray(tc.cb_values if isinstance(tc, TimeChangedPath) else tc, dtype=float)
    return np.minimum.accumulate(y[::-1])[::-1]


# -- direct CB simulation ---------------------------------------------------


def simulate_cb_path(m, x0, policy=None, seed=0, index=0, floor_ratio=1e-9, cb_horizon=math.inf,
                     max_steps=50_000_000):
    """Simulate ``Y`` directly on the Lamperti clock.

    Same increments and clock as ``time_change(simulate_path(...))``, but
    the clock is accumulated step by step, so the path can be followed far
    below the point where the Levy clock stops resolving steps.
    """
    policy = policy or AdaptiveLamperti()
    raw = _simulate(m, x0, policy, seed, index, cb_horizon=cb_horizon, floor_ratio=floor_ratio,
                    max_steps=max_steps, resolve_levy=False)
    source = {"seed": (seed, index), "policy": policy_to_dict(policy), "stop_reason": STOP_REASONS[raw.status]}
    if raw.status == CROSSING:
        return TimeChangedPath(raw.clock, raw.values, float(raw.clock[-1]), raw.times, source)
    if raw.status == FLOOR:
        t0 = raw.clock[-1] + floor_tail_clock(m, raw.x_last)
        return TimeChangedPath(np.append(raw.clock, t0), np.append(raw.values, 0.0), float(t0), raw.times, source)
    return TimeChangedPath(raw.clock, raw.values, math.inf, raw.times, source)


@dataclass(frozen=True)
class Ensemble:
    """Extinction times and CB marginals of independent paths.

    ``marginals[i, j]`` is ``Y`` of path ``i`` at ``checkpoints[j]``;
    ``NaN`` marks a path stopped (horizon or step cap) before the checkpoint.
    """

    extinction_times: np.ndarray
    checkpoints: np.ndarray
    marginals: np.ndarray
    stop_reasons: tuple
    seed: int

    @property
    def n_paths(self):
        return self.extinction_times.size

    def summary(self, probs=(0.1, 0.25, 0.5, 0.75, 0.9)):
        finite = self.extinction_times[np.isfinite(self.extinction_times)]
        if finite.size == 0:
            raise EmptyEnsemble("no path went extinct")
        q = np.quantile(finite, probs)
        return {
            "n_paths": int(self.n_paths),
            "n_extinct": int(finite.size),
            "T0_quantiles": {f"q{round(100 * p)}": float(v) for p, v in zip(probs, q)},
        }


def _run_chunk(args):
    m, x0, policy, seed, indices, checkpoints, floor_ratio, cb_horizon, max_steps = args
    t0s, rows, reasons = [], [], []
    for i in indices:
        raw = _simulate(m, x0, policy, seed, i, cb_horizon=cb_horizon, floor_ratio=floor_ratio,
                        record=False, checkpoints=checkpoints, max_steps=max_steps, resolve_levy=False)
        row = raw.checkpoints.copy()
        if raw.status in (CROSSING, FLOOR):
            t0 = raw.clock_last + (floor_tail_clock(m, raw.x_last) if raw.status == FLOOR else 0.0)
            pending = np.isnan(row)
            # checkpoints inside the residual stretch: straight line down to 0
            w = np.clip((t0 - checkpoints[pending]) / max(t0 - raw.clock_last, 1e-300), 0.0, 1.0)
            row[pending] = raw.x_last * w if raw.status == FLOOR else 0.0
        else:
            t0 = math.inf
        t0s.append(t0)
        rows.append(row)
        reasons.append(STOP_REASONS[raw.status])
    return t0s, rows, reasons


def simulate_ensemble(m, x0, n_paths, policy=None, seed=0, checkpoints=(), floor_ratio=1e-9,
                      cb_horizon=math.inf, max_steps=50_000_000, workers=1):
    """Extinction times and CB marginals for ``n_paths`` independent paths.

    Path ``i`` uses the stream ``(seed, i)``, so the result does not depend
    on ``workers``.
    """
    if n_paths < 1:
        raise EmptyEnsemble("n_paths must be at least 1")
    policy = policy or AdaptiveLamperti()
    ck = np.sort(np.asarray(checkpoints, dtype=float))
    workers = max(1, int(workers))
    chunks = np.array_split(np.arange(n_paths), workers if workers > 1 else 1)
    jobs = [(m, x0, policy, seed, c.tolist(), ck, floor_ratio, cb_horizon, max_steps) for c in chunks if c.size]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]
    t0s = [t for r in results for t in r[0]]
    rows = [row for r in results for row in r[1]]
    reasons = tuple(x for r in results for x in r[2])
    marg = np.array(rows).reshape(n_paths, ck.size)
    return Ensemble(np.asarray(t0s), ck, marg, reasons, seed)
