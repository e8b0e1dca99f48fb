"""Scale function ``W``: the increasing function with Laplace transform ``1/psi``.

Closed forms cover the ``stable``, ``quadratic`` and ``linear_quadratic``
presets; everything else goes through a fixed-Talbot inversion carried out in
multiprecision (double precision loses about five digits at 64 nodes).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import GridTooSmall, InversionUnstable, OutOfRange

CLOSED_FORMS = ("stable", "quadratic", "linear_quadratic")


@dataclass(frozen=True)
class InversionParams:
    nodes: int = 64
    method: str = "talbot"  # or "euler", kept as a cross-check
    check: bool = True
    rel_tol: float = 1e-8

    @property
    def dps(self):
        return int(0.6 * self.nodes) + 10


@functools.lru_cache(maxsize=16)
def _talbot_nodes(m, dps):
    with mp.workdps(dps):
        out = []
        for k in range(1, m):
            th = k * mp.pi / m
            cot = mp.cot(th)
            out.append((th * (cot + 1j), 1 + 1j * (th + (th * cot - 1) * cot)))
        return out


@functools.lru_cache(maxsize=16)
def _euler_weights(m, dps):
    with mp.workdps(dps):
        xi = [mp.mpf(0)] * (2 * m + 1)
        xi[0] = mp.mpf(1) / 2
        for k in range(1, m + 1):
            xi[k] = mp.mpf(1)
        xi[2 * m] = mp.mpf(2) ** (-m)
        for j in range(1, m):
            xi[2 * m - j] = xi[2 * m - j + 1] + mp.mpf(2) ** (-m) * mp.binomial(m, j)
        base = m * mp.log(10) / 3
        return [(base + 1j * mp.pi * k, (-1) ** k * xi[k]) for k in range(2 * m + 1)], base


def talbot_invert(transform, t, nodes=64, dps=None):
    """Fixed-Talbot inverse Laplace transform of ``transform`` at ``t > 0``.

    ``transform`` receives and returns mpmath numbers.
    """
    dps = dps or int(0.6 * nodes) + 10
    with mp.workdps(dps):
        t = mp.mpf(t)
        r = mp.mpf(2 * nodes) / (5 * t)
        acc = transform(r) * mp.exp(r * t) / 2
        for z, weight in _talbot_nodes(nodes, dps):
            s = r * z
            acc += mp.re(mp.exp(t * s) * transform(s) * weight)
        return float(mp.re(r / nodes * acc))


def euler_invert(transform, t, nodes=32, dps=None):
    """Abate-Whitt Euler-summation inverse, used to cross-check Talbot."""
    dps = dps or int(0.6 * nodes) + 10
    with mp.workdps(dps):
        t = mp.mpf(t)
        pts, base = _euler_weights(nodes, dps)
        acc = mp.mpf(0)
        for beta, eta in pts:
            acc += eta * mp.re(transform(beta / t))
        return float(mp.power(10, base / mp.log(10)) / t * acc)


class ScaleFunction:
    def __init__(self, mechanism, closed_form=None, inversion_params=None):
        self.mechanism = mechanism
        self.closed_form = closed_form
        self.inversion_params = inversion_params or InversionParams()
        # invert 1/psi(s + shift) when psi has a positive root, then undo the shift
        root = mechanism.largest_root
        self._shift = root if root > 0 else 0.0

    def __repr__(self):
        return f"ScaleFunction({self.mechanism.describe()}, {self.closed_form or 'numeric'})"

    def _transform(self, s):
        s = s + self._shift
        total = 0
        for coef, power in self.mechanism.terms:
            total += coef * (s if power == 1.0 else mp.power(s, power))
        return 1 / total

    def _closed(self, x):
        spec = self.mechanism.spec
        if self.closed_form == "stable":
            return x ** (spec.alpha - 1.0) / (spec.c_plus * gamma_fn(spec.alpha))
        if self.closed_form == "quadratic" or not spec.a:
            return x / spec.beta
        return -np.expm1(-spec.a * x / spec.beta) / spec.a

    def _numeric_one(self, x, nodes):
        p = self.inversion_params
        if p.method == "euler":
            value = euler_invert(self._transform, x, nodes=max(nodes // 2, 8), dps=p.dps)
        else:
            value = talbot_invert(self._transform, x, nodes=nodes, dps=p.dps)
        if not self._shift:
            return value
        with np.errstate(over="ignore"):
            return float(value * np.exp(self._shift * x))

    def numeric(self, x):
        """Numerical inversion regardless of any closed form."""
        p = self.inversion_params
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for idx, xi in np.ndenumerate(x):
            fine = self._numeric_one(xi, p.nodes)
            if p.check:
                half = self._numeric_one(xi, p.nodes // 2)
                quarter = self._numeric_one(xi, p.nodes // 4)
                d_fine, d_coarse = abs(fine - half), abs(half - quarter)
                if d_fine > d_coarse and d_fine > p.rel_tol * abs(fine):
                    raise InversionUnstable(f"refinements diverge at x={xi:g}: {quarter}, {half}, {fine}")
            out[idx] = fine
        return out if out.ndim else float(out)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)):
            raise OutOfRange("x", x, "x > 0")
        if self.closed_form:
            out = self._closed(x)
            return out if np.ndim(out) else float(out)
        return self.numeric(x)


def make_scale(m, numeric=False, **params):
    closed = m.preset if (m.preset in CLOSED_FORMS and not numeric) else None
    return ScaleFunction(m, closed, InversionParams(**params))


def scale_eval(w, x):
    return w(x)


@dataclass(frozen=True)
class SandwichReport:
    """Extremes of ``p(x) = W(x) x psi(1/x)`` over a grid.

    ``K`` is the largest constant with ``K <= p(x) <= 1/K`` on the grid.
    """

    min_product: float
    max_product: float
    K: float
    consistent: bool


def sandwich_scan(w, x_grid):
    x = np.asarray(x_grid, dtype=float)
    if x.size < 2 or math.log10(x.max() / x.min()) < 6.0 - 1e-9:
        raise GridTooSmall("sandwich grid must span at least 6 decades")
    p = np.asarray(w(x)) * x * np.asarray(w.mechanism.psi(1.0 / x))
    lo, hi = float(p.min()), float(p.max())
    ok = bool(np.all(np.isfinite(p)) and lo > 0)
    k = min(lo, 1.0 / hi) if ok else 0.0
    return SandwichReport(lo, hi, k, ok and k <= lo and k <= 1.0 / hi)


@dataclass(frozen=True)
class HypothesisCheck:
    ratio: float
    estimate: float
    verdict: bool


DEFAULT_H_SEQUENCE = np.geomspace(1.0, 1e-8, 33)


def hypothesis_h_check(w, ratios, x_sequence=None, margin=1e-3):
    """Estimate ``limsup_{x->0} W(b x)/W(x)`` for each ``b`` in ``ratios``.

    The estimate is the maximum ratio over the second half of the
    decreasing sequence; the verdict holds when it stays below ``1 - margin``.
    """
    x = DEFAULT_H_SEQUENCE if x_sequence is None else np.asarray(x_sequence, dtype=float)
    if np.any(np.diff(x) >= 0):
        raise OutOfRange("x_sequence", "...", "strictly decreasing")
    tail = x[x.size // 2:]
    w_tail = np.asarray(w(tail))
    out = []
    for b in ratios:
        if not 0 < b <= 1:
            raise OutOfRange("ratio", b, "ratio in (0, 1]")
        est = float(np.max(np.asarray(w(b * tail)) / w_tail))
        out.append(HypothesisCheck(float(b), est, est < 1.0 - margin))
    return out
