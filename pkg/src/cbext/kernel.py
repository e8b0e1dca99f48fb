"""Extinction calculus: ``phi(t) = int_t^inf du/psi(u)``, its inverse, the
cumulant flow ``u_t`` and the laws built on them.

Naming: ``phi`` is the integral above and ``varphi`` its inverse, so that
``u_t(lam) = varphi(t + phi(lam))`` and ``P_x(T0 <= t) = exp(-x varphi(t))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DegenerateCondition,
    GreyConditionFails,
    NotRegularlyVarying,
    OutOfRange,
    QuadratureNotConverged,
    RangeError,
)
from .mechanism import grey_condition

EXP_UNDERFLOW = 745.0
_GL16 = np.polynomial.legendre.leggauss(16)
_GL8 = np.polynomial.legendre.leggauss(8)


def _gl_log_integral(psi, lo, hi, rule=_GL16):
    """``int_lo^hi du/psi(u)`` per element, Gauss-Legendre in ``log u``."""
    x, w = rule
    a, b = np.log(lo)[..., None], np.log(hi)[..., None]
    half = 0.5 * (b - a)
    u = np.exp(a + half * (x + 1.0))
    return np.sum(w * u / psi(u), axis=-1) * half[..., 0]


def _tail_series(terms, t):
    """Exact ``int_t^inf du/psi(u)`` for a one- or two-term power sum.

    Writing ``psi = A u^m (1 + r(u))`` with ``r = (B/A) u^(n-m)``, the
    integral expands in powers of ``-r`` and converges for ``|r(t)| < 1``.
    """
    (coef_a, m), rest = _split_dominant(terms)
    t = np.asarray(t, dtype=float)
    lead = t ** (1.0 - m) / (coef_a * (m - 1.0))
    if not rest:
        return lead
    coef_b, n = rest[0]
    gap = m - n
    r = -(coef_b / coef_a) * t ** (-gap)
    total = np.zeros_like(t)
    term_pow = np.ones_like(t)
    for k in range(200):
        term = term_pow * t ** (1.0 - m) / (coef_a * (m - 1.0 + k * gap))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
        term_pow = term_pow * r
    return total


def _split_dominant(terms):
    terms = sorted(terms, key=lambda cp: cp[1], reverse=True)
    if len(terms) > 2:
        raise NotImplementedError("analytic tail supports at most two power terms")
    return terms[0], terms[1:]


@dataclass(frozen=True)
class KernelTable:
    """Tabulated ``phi`` on increasing nodes; ``t_star`` is the tail cut."""

    t: np.ndarray
    phi: np.ndarray
    t_star: float

    def __post_init__(self):
        # inverse interpolant: log t as a monotone function of log phi
        object.__setattr__(
            self, "_inv", PchipInterpolator(np.log(self.phi[::-1]), np.log(self.t[::-1]))
        )


class ExtinctionKernel:
    """``phi``/``varphi`` pair for one mechanism satisfying Grey's condition.

    Build with :func:`build_kernel`.  Closed forms are used for the
    ``stable``, ``quadratic`` and ``linear_quadratic`` presets unless a
    numeric kernel is requested explicitly.
    """

    def __init__(self, mechanism, closed_form, table, t_min, t_max, rel_tol):
        self.mechanism = mechanism
        self.closed_form = closed_form
        self.table = table
        self.tail_index = mechanism.tail_index
        self.t_min = t_min
        self.t_max = t_max
        self.rel_tol = rel_tol

    def __repr__(self):
        mode = self.closed_form or "numeric"
        return f"ExtinctionKernel({self.mechanism.describe()}, {mode})"

    # -- phi and its inverse ------------------------------------------------

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)):
            raise OutOfRange("t", t, "t > 0")
        out = self._phi_closed(t) if self.closed_form else self._phi_numeric(t)
        return out if out.ndim else float(out)

    def varphi(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(~(s > 0)):
            raise OutOfRange("s", s, "s > 0")
        out = self._varphi_closed(s) if self.closed_form else self._varphi_numeric(s)
        return out if out.ndim else float(out)

    def _params(self):
        spec = self.mechanism.spec
        return spec.c_plus, spec.alpha, spec.beta, spec.a

    def _phi_closed(self, t):
        c, alpha, beta, a = self._params()
        if self.closed_form == "stable":
            return t ** (1.0 - alpha) / (c * (alpha - 1.0))
        if self.closed_form == "quadratic" or not a:
            return 1.0 / (beta * t)
        return np.log1p(a / (beta * t)) / a

    def _varphi_closed(self, s):
        c, alpha, beta, a = self._params()
        if self.closed_form == "stable":
            return (c * (alpha - 1.0) * s) ** (-1.0 / (alpha - 1.0))
        if self.closed_form == "quadratic" or not a:
            return 1.0 / (beta * s)
        with np.errstate(over="ignore"):
            out = a / (beta * np.expm1(a * s))
        if np.any(out == 0.0):
            raise RangeError("varphi underflows to 0 (needs a * s below about 745)")
        return out

    def _phi_numeric(self, t):
        tab = self.table
        if np.any(t < self.t_min * (1 - 1e-12)):
            raise RangeError(f"t below the table range [{self.t_min:g}, inf)")
        out = np.empty_like(t)
        far = t >= tab.t_star
        if np.any(far):
            out[far] = _tail_series(self.mechanism.terms, t[far])
        near = ~far
        if np.any(near):
            tn = t[near]
            j = np.searchsorted(tab.t, tn, side="left")
            node = tab.t[j]
            corr = np.where(node > tn, _gl_log_integral(self.mechanism.psi, tn, node), 0.0)
            out[near] = tab.phi[j] + corr
        return out

    def _varphi_numeric(self, s):
        tab = self.table
        s_max = tab.phi[0]
        if np.any(s > s_max * (1 + 1e-14)):
            raise RangeError(f"s above phi(t_min) = {s_max:g}; no table coverage")
        s = np.minimum(s, s_max)
        (coef_a, m), _ = _split_dominant(self.mechanism.terms)
        in_table = s >= tab.phi[-1]
        y = np.where(
            in_table,
            tab._inv(np.log(np.where(in_table, s, tab.phi[-1]))),
            -np.log(s * coef_a * (m - 1.0)) / (m - 1.0),
        )
        y = np.atleast_1d(y).astype(float)
        log_s = np.atleast_1d(np.log(s))
        y_min = math.log(self.t_min)
        active = np.ones(y.shape, dtype=bool)
        # Newton on log phi(e^y) = log s; log phi is close to linear in y
        for _ in range(60):
            if not active.any():
                break
            t = np.exp(y[active])
            ph = self._phi_numeric(t)
            deriv = -t / (np.asarray(self.mechanism.psi(t)) * ph)
            step = (np.log(ph) - log_s[active]) / deriv
            y_new = np.maximum(y[active] - step, y_min)
            done = np.abs(y_new - y[active]) < 1e-14
            y[active] = y_new
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        return np.exp(y).reshape(np.shape(s))

    def phi_prime(self, t):
        return -1.0 / np.asarray(self.mechanism.psi(t))

    # -- flow and laws ------------------------------------------------------

    def u_t(self, t, lam):
        """Cumulant flow ``u_t(lam) = varphi(t + phi(lam))``; ``lam`` may be ``inf``."""
        t, lam = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(lam, dtype=float))
        if np.any(t < 0):
            raise OutOfRange("t", t, "t >= 0")
        if np.any(~(lam > 0)):
            raise OutOfRange("lambda", lam, "lambda > 0 or inf")
        out = np.array(lam, dtype=float, copy=True)
        inf = np.isinf(lam) & (t > 0)
        if np.any(inf):
            out[inf] = self.varphi(t[inf])
        move = (t > 0) & ~np.isinf(lam)
        if np.any(move):
            out[move] = self.varphi(t[move] + self.phi(lam[move]))
        return out if out.ndim else float(out)

    def extinction_cdf(self, x, t):
        """``P_x(T0 <= t) = exp(-x varphi(t))``; exactly 0 past the exp underflow."""
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)):
            raise OutOfRange("x", x, "x > 0")
        z = x * np.asarray(self.varphi(t))
        out = np.where(z > EXP_UNDERFLOW, 0.0, np.exp(-np.minimum(z, EXP_UNDERFLOW)))
        return out if out.ndim else float(out)

    def sample_extinction_time(self, x, u):
        """Inverse-CDF draw of the extinction time from mass ``x``."""
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise OutOfRange("u", u, "u in (0, 1)")
        return self.phi(-np.log(u) / x)

    def conditional_laplace(self, x, t, lam):
        """``E_x[exp(-lam Y_t) | T0 > t]``."""
        v = np.asarray(self.varphi(t))
        w = np.asarray(self.u_t(t, lam))
        den = -np.expm1(-x * v)
        if np.any(den <= 0):
            raise DegenerateCondition("survival probability underflows to zero")
        out = (np.expm1(-x * w) - np.expm1(-x * v)) / den
        return out if out.ndim else float(out)


def build_kernel(m, t_min=1e-6, t_max=1e6, rel_tol=1e-9, numeric=False, nodes_per_decade=512):
    """Tabulate ``phi`` for mechanism ``m``.

    Closed forms short-circuit the table unless ``numeric=True``.  The
    numeric table integrates ``1/psi`` with 16-point Gauss-Legendre panels in
    ``log u`` (checked against an 8-point rule to ``rel_tol``), from ``t_min``
    up to a cut ``t_star >= t_max`` beyond which the power-sum tail series is
    exact.
    """
    if not grey_condition(m):
        raise GreyConditionFails(f"mechanism {m.describe()} does not die out in finite time")
    closed = m.preset if m.preset in ("stable", "quadratic", "linear_quadratic") else None
    if closed and not numeric:
        return ExtinctionKernel(m, closed, None, t_min, t_max, rel_tol)
    if not 0 < t_min < t_max:
        raise OutOfRange("t_min", t_min, "0 < t_min < t_max")

    (coef_a, mpow), rest = _split_dominant(m.terms)
    t_star = t_max
    if rest:
        coef_b, npow = rest[0]
        t_star = max(t_max, (2.0 * abs(coef_b / coef_a)) ** (1.0 / (mpow - npow)))
    decades = math.log10(t_max / t_min)
    nodes = np.logspace(math.log10(t_min), math.log10(t_max), int(round(nodes_per_decade * decades)) + 1)
    if t_star > t_max:
        ext = math.log10(t_star / t_max)
        more = np.logspace(math.log10(t_max), math.log10(t_star), max(2, int(math.ceil(64 * ext)) + 1))
        nodes = np.concatenate([nodes, more[1:]])
        t_star = float(nodes[-1])

    seg16 = _gl_log_integral(m.psi, nodes[:-1], nodes[1:], _GL16)
    seg8 = _gl_log_integral(m.psi, nodes[:-1], nodes[1:], _GL8)
    err = np.max(np.abs(seg16 - seg8) / np.abs(seg16))
    if not err <= rel_tol:
        raise QuadratureNotConverged(f"panel rules disagree by {err:.3g} > {rel_tol:g}")
    tail = float(_tail_series(m.terms, t_star))
    phi_nodes = tail + np.concatenate([np.cumsum(seg16[::-1])[::-1], [0.0]])
    return ExtinctionKernel(m, None, KernelTable(nodes, phi_nodes, t_star), t_min, t_max, rel_tol)


def yaglom_limit_lt(alpha, lam):
    """Laplace transform of the quasi-stationary limit for index ``alpha``."""
    if not 1.0 < alpha <= 2.0:
        raise OutOfRange("alpha", alpha, "alpha in (1, 2]")
    lam = np.asarray(lam, dtype=float)
    p = alpha - 1.0
    out = 1.0 - (1.0 + lam ** (-p)) ** (-1.0 / p)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class YaglomTable:
    t: np.ndarray
    lam: np.ndarray
    values: np.ndarray
    limits: np.ndarray

    @property
    def errors(self):
        return np.abs(self.values - self.limits[None, :])

    @property
    def sup_error(self):
        return self.errors.max(axis=1)

    def decreasing_in_t(self):
        return bool(np.all(np.diff(self.errors, axis=0) < 0))


def yaglom_check(kernel, x, t_list, lambda_grid, alpha=None):
    """Compare the rescaled conditional Laplace transform with its limit.

    The argument passed to the transform is ``lam * varphi(t)``, i.e. the
    population is normalised by ``c_t = 1/varphi(t)``.
    """
    m = kernel.mechanism
    if m.preset not in ("stable", "quadratic"):
        raise NotRegularlyVarying(f"preset {m.preset!r} is not a pure power mechanism")
    if alpha is None:
        alpha = m.spec.alpha if m.preset == "stable" else 2.0
    t = np.asarray(t_list, dtype=float)
    lam = np.asarray(lambda_grid, dtype=float)
    scale = np.asarray(kernel.varphi(t))[:, None]
    values = np.asarray(kernel.conditional_laplace(x, t[:, None], lam[None, :] * scale))
    return YaglomTable(t, lam, values, np.asarray(yaglom_limit_lt(alpha, lam)))
