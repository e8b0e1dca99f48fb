"""Law-of-the-iterated-logarithm scans near extinction.

The normalised statistic at a scale ``t`` is ``V(t) / f(t)`` with
``f(t) = log log varphi(t) / varphi(t)``, where ``V(t)`` reads a path
reversed from its extinction time.  A limsup cannot be observed on a finite
grid; it is proxied by the running max over the geometric scales
``t_n = phi(r^n)``.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEnsemble, NotExtinct, OutOfRange, ScaleTooCoarse
from .lamperti import (
    TimeChangedPath,
    future_infimum,
    reflect_at_infimum,
    reverse_at_extinction,
    simulate_cb_path,
)
from .paths import RelativeMove, policy_to_dict

GUARD = math.exp(2.0)  # scales with varphi <= e^2 are dropped from scans


class StatisticKind(str, enum.Enum):
    REVERSED = "reversed"
    REFLECTED_REVERSED = "reflected_reversed"
    FUTURE_INFIMUM = "future_infimum"


def geometric_sequence(k, r, n0, n1, grid="power"):
    """Scales ``t_n = phi(r^n)`` for ``n0 <= n <= n1`` (decreasing).

    ``grid="iterated"`` gives the sparser ``phi(exp(n^r))`` instead.
    """
    if not r > 1:
        raise OutOfRange("r", r, "r > 1")
    if not n0 < n1:
        raise OutOfRange("n0, n1", (n0, n1), "n0 < n1")
    n = np.arange(n0, n1 + 1, dtype=float)
    if grid == "power":
        lam = r**n
    elif grid == "iterated":
        lam = np.exp(n**r)
    else:
        raise OutOfRange("grid", grid, "'power' or 'iterated'")
    return np.asarray(k.phi(lam), dtype=float)


def lil_normalizer(k, t):
    """``f(t) = log log varphi(t) / varphi(t)``."""
    v = np.asarray(k.varphi(t), dtype=float)
    if np.any(v <= math.e):
        raise ScaleTooCoarse(f"varphi(t) <= e at t={t}; log log is not positive")
    out = np.log(np.log(v)) / v
    return out if out.ndim else float(out)


def self_similar_normalizer(t, c_plus, alpha):
    """``(c_+ (alpha-1))^(1/(alpha-1)) t^(1/(alpha-1)) log log(1/t)``.

    The stable-mechanism form of the normalisation.  It differs from
    ``f(t)`` only through ``log log(1/t)`` against ``log log varphi(t)``,
    whose ratio tends to 1 at an iterated-log rate.
    """
    p = 1.0 / (alpha - 1.0)
    t = np.asarray(t, dtype=float)
    if np.any(t >= 1.0 / math.e):
        raise ScaleTooCoarse("log log(1/t) needs t < 1/e")
    return (c_plus * (alpha - 1.0)) ** p * t**p * np.log(np.log(1.0 / t))


def path_view(tc, kind):
    """The reversed path matching ``kind``."""
    kind = StatisticKind(kind)
    if kind is StatisticKind.REVERSED:
        return reverse_at_extinction(tc)
    if kind is StatisticKind.REFLECTED_REVERSED:
        return reflect_at_infimum(tc)
    rev = reverse_at_extinction(tc)
    # future infimum of the reversed path, i.e. the forward running minimum
    return type(rev)(rev.s, future_infimum(rev.values))


def lil_statistic(view, k, t_n):
    """``V((T0 - t_n)-) / f(t_n)`` for a reversed view ``V``."""
    t_n = np.asarray(t_n, dtype=float)
    if np.any(t_n >= view.s[-1]):
        raise OutOfRange("t_n", t_n, "t_n < extinction time")
    out = np.asarray(view.value_at(t_n)) / np.asarray(lil_normalizer(k, t_n))
    return out if out.ndim else float(out)


def synthetic_path(k, t_grid, factor=1.0, reflected=False):
    """A CB path whose reversal equals ``factor * f`` at every point of ``t_grid``.

    The path is extinct at ``T0 = 2 max(t_grid)`` and starts from the value
    at the largest scale.  With ``reflected=True`` the path touches 0 at
    ``1.5 max(t_grid)`` before the scales are reached, so its running minimum
    vanishes there and the reflected reversal equals ``factor * f`` too.
    """
    s = np.sort(np.asarray(t_grid, dtype=float))
    if np.any(s <= 0):
        raise OutOfRange("t_grid", "...", "positive scales")
    t0 = float(s[-1] * 2.0)
    vals = factor * np.asarray(lil_normalizer(k, s), dtype=float)
    if reflected:
        s = np.concatenate([[0.0], s, [1.5 * s[-1], t0]])
        values = np.concatenate([[0.0], vals, [0.0, vals[-1]]])
    else:
        s = np.concatenate([[0.0], s, [t0]])
        values = np.concatenate([[0.0], vals, [vals[-1]]])
    # the reversed grid must reproduce s exactly, so keep it alongside
    cb_times = (t0 - s)[::-1]
    cb_times[0] = 0.0
    return _Exact(cb_times, values[::-1].copy(), t0, None, {"synthetic": True}, s)


@dataclass(frozen=True)
class _Exact(TimeChangedPath):
    exact_s: np.ndarray = None

    def __post_init__(self):
        if self.exact_s is None:
            raise ValueError("exact_s required")


def _views(tc, kinds):
    out = {}
    for kind in kinds:
        v = path_view(tc, kind)
        if isinstance(tc, _Exact):
            v = type(v)(tc.exact_s.copy(), v.values)
        out[StatisticKind(kind)] = v
    return out


@dataclass(frozen=True)
class ScanReport:
    scales: np.ndarray
    n_index: np.ndarray
    kind: StatisticKind
    q10: np.ndarray
    q50: np.ndarray
    q90: np.ndarray
    n_paths: int
    mechanism: dict
    r: float
    window_start: int
    skipped: tuple = ()
    seed: int | None = None
    running_max: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "mechanism": self.mechanism,
            "kind": self.kind.value,
            "r": self.r,
            "window_start": self.window_start,
            "scales": self.scales.tolist(),
            "skipped": list(self.skipped),
            "quantiles": [
                {"n": int(n), "t": float(t), "q10": float(a), "q50": float(b), "q90": float(c)}
                for n, t, a, b, c in zip(self.n_index, self.scales, self.q10, self.q50, self.q90)
            ],
            "n_paths": self.n_paths,
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        rows = [("n", "t", "q10", "q50", "q90")]
        rows += [
            (int(n), repr(float(t)), repr(float(a)), repr(float(b)), repr(float(c)))
            for n, t, a, b, c in zip(self.n_index, self.scales, self.q10, self.q50, self.q90)
        ]
        return rows


def _scale_grid(k, r, n0, n1):
    n = np.arange(n0, n1 + 1)
    keep = float(r) ** n > GUARD
    if not keep.any():
        raise ScaleTooCoarse("every scale has varphi <= e^2")
    return n[keep], geometric_sequence(k, r, n0, n1)[keep], tuple(int(i) for i in n[~keep])


def statistics_matrix(paths, k, kinds, scales):
    """``{kind: (n_paths, n_scales)}`` array of statistics; NaN where ``t_n >= T0``."""
    mats = {StatisticKind(kd): np.full((len(paths), scales.size), np.nan) for kd in kinds}
    for i, tc in enumerate(paths):
        if not tc.extinct:
            raise NotExtinct(f"path {i} is not extinct")
        ok = scales < tc.extinction_time
        for kind, view in _views(tc, kinds).items():
            mats[kind][i, ok] = lil_statistic(view, k, scales[ok])
    return mats


def report_from_matrix(stats, scales, n_index, kind, window_start, r, mechanism, skipped=(), seed=None):
    """Quantiles of the running max over ``n >= window_start``."""
    if stats.shape[0] == 0:
        raise EmptyEnsemble("no paths to scan")
    sel = n_index >= window_start
    if not sel.any():
        raise OutOfRange("window_start", window_start, "at most the deepest scale index")
    s = stats[:, sel]
    filled = np.where(np.isnan(s), -np.inf, s)
    run = np.maximum.accumulate(filled, axis=1)
    run[np.isneginf(run)] = np.nan
    q = np.nanquantile(run, [0.1, 0.5, 0.9], axis=0)
    return ScanReport(scales[sel], n_index[sel], StatisticKind(kind), q[0], q[1], q[2],
                      stats.shape[0], mechanism, float(r), int(window_start), tuple(skipped), seed, run)


def scan(paths, k, kind, r=2.0, n0=3, n1=20, window_start=None, seed=None):
    """Scan an ensemble of extinct CB paths; see :func:`report_from_matrix`."""
    paths = list(paths)
    if not paths:
        raise EmptyEnsemble("no paths to scan")
    n_index, scales, skipped = _scale_grid(k, r, n0, n1)
    mat = statistics_matrix(paths, k, [kind], scales)[StatisticKind(kind)]
    ws = n_index[0] if window_start is None else window_start
    return report_from_matrix(mat, scales, n_index, kind, ws, r, k.mechanism.describe(), skipped, seed)


def _scan_chunk(args):
    m, k, x0, policy, seed, indices, kinds, scales, floor_ratio = args
    mats = {StatisticKind(kd): [] for kd in kinds}
    for i in indices:
        tc = simulate_cb_path(m, x0, policy, seed, i, floor_ratio=floor_ratio)
        one = statistics_matrix([tc], k, kinds, scales)
        for kd in mats:
            mats[kd].append(one[kd][0])
    return {kd: np.array(v) for kd, v in mats.items()}


DEFAULT_LIL_POLICY = RelativeMove(eps=1e-3)


def simulate_scan(m, k, n_paths, kinds=("reversed", "reflected_reversed"), r=2.0, n0=3, n1=20,
                  window_start=None, x0=1.0, policy=DEFAULT_LIL_POLICY, seed=0,
                  floor_ratio=1e-12, workers=1):
    """Simulate ``n_paths`` CB paths to extinction and scan each ``kind``.

    Paths are generated, read at the scales and dropped one at a time, so
    memory stays bounded by a single path.  Returns ``{kind: ScanReport}``.
    """
    if n_paths < 1:
        raise EmptyEnsemble("n_paths must be at least 1")
    n_index, scales, skipped = _scale_grid(k, r, n0, n1)
    workers = max(1, int(workers))
    chunks = [c.tolist() for c in np.array_split(np.arange(n_paths), workers) if c.size]
    jobs = [(m, k, x0, policy, seed, c, kinds, scales, floor_ratio) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_scan_chunk, jobs))
    else:
        parts = [_scan_chunk(j) for j in jobs]
    ws = n_index[0] if window_start is None else window_start
    mech = {**m.describe(), "policy": policy_to_dict(policy), "x0": x0}
    out = {}
    for kd in kinds:
        kd = StatisticKind(kd)
        mat = np.vstack([p[kd] for p in parts])
        out[kd] = report_from_matrix(mat, scales, n_index, kd, ws, r, mech, skipped, seed)
    return out
