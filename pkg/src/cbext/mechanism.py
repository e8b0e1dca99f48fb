"""Branching mechanisms built from parametric Levy-Khintchine presets.

A mechanism is a sum of power terms ``coef * lam**power``: a drift term
(power 1), a Gaussian term (power 2) and a one-sided stable term (power
``alpha``).  Only presets with a closed-form exponent are supported, so every
downstream quantity can evaluate ``psi`` exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooSmall, OutOfRange, ValidationError

PRESETS = ("stable", "quadratic", "linear_quadratic", "stable_gaussian", "stable_drift")

_REQUIRED = {
    "stable": ("c_plus", "alpha"),
    "quadratic": ("beta",),
    "linear_quadratic": ("a", "beta"),
    "stable_gaussian": ("c_plus", "alpha", "beta"),
    "stable_drift": ("a", "c_plus", "alpha"),
}

DEFAULT_EXPONENT_GRID = 10.0 ** (np.arange(65) / 8.0)


class Criticality(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


@dataclass(frozen=True)
class MechanismSpec:
    """Preset name plus its parameters.

    Parameters not used by the preset must be left as ``None``.  Pass
    ``validate=False`` to build degenerate fixtures (e.g. a pure drift)
    that the public presets reject.
    """

    preset: str
    c_plus: float | None = None
    alpha: float | None = None
    beta: float | None = None
    a: float | None = None
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValidationError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        for name in ("c_plus", "alpha", "beta", "a"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, float(value))
        if self.validate:
            self._check()

    def _check(self):
        needed = _REQUIRED[self.preset]
        for name in ("c_plus", "alpha", "beta", "a"):
            value = getattr(self, name)
            if name in needed and value is None:
                raise ValidationError(f"preset {self.preset!r} requires {name}")
            if name not in needed and value is not None:
                raise ValidationError(f"preset {self.preset!r} does not take {name}")
            if value is not None and not math.isfinite(value):
                raise OutOfRange(name, value, "a finite number")
        if self.c_plus is not None and not self.c_plus > 0:
            raise OutOfRange("c_plus", self.c_plus, "c_plus > 0")
        if self.beta is not None and not self.beta > 0:
            raise OutOfRange("beta", self.beta, "beta > 0")
        if self.alpha is not None:
            if self.preset == "stable":
                if not 1.0 < self.alpha <= 2.0:
                    raise OutOfRange("alpha", self.alpha, "alpha in (1, 2]")
            elif not 1.0 < self.alpha < 2.0:
                raise OutOfRange("alpha", self.alpha, "alpha in (1, 2)")

    # convenience constructors
    @classmethod
    def stable(cls, c_plus, alpha):
        return cls("stable", c_plus=c_plus, alpha=alpha)

    @classmethod
    def quadratic(cls, beta):
        return cls("quadratic", beta=beta)

    @classmethod
    def linear_quadratic(cls, a, beta):
        return cls("linear_quadratic", a=a, beta=beta)

    @classmethod
    def stable_gaussian(cls, c_plus, alpha, beta):
        return cls("stable_gaussian", c_plus=c_plus, alpha=alpha, beta=beta)

    @classmethod
    def stable_drift(cls, a, c_plus, alpha):
        return cls("stable_drift", a=a, c_plus=c_plus, alpha=alpha)

    def to_dict(self):
        out = {"preset": self.preset}
        for name in ("c_plus", "alpha", "beta", "a"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        keys = ("preset", "c_plus", "alpha", "beta", "a")
        unknown = set(data) - set(keys)
        if unknown:
            raise ValidationError(f"unknown mechanism keys: {sorted(unknown)}")
        if "preset" not in data:
            raise ValidationError("mechanism config needs a 'preset' key")
        return cls(**{k: data[k] for k in keys if k in data})

    def terms(self):
        """Nonzero ``(coef, power)`` pairs of psi."""
        out = []
        if self.a:
            out.append((self.a, 1.0))
        if self.beta:
            out.append((self.beta, 2.0))
        if self.c_plus:
            out.append((self.c_plus, self.alpha))
        return tuple(out)


@dataclass(frozen=True)
class BranchingMechanism:
    spec: MechanismSpec
    psi_prime_zero: float
    largest_root: float
    criticality: Criticality

    @property
    def preset(self):
        return self.spec.preset

    @property
    def terms(self):
        return self.spec.terms()

    @property
    def dominant_term(self):
        """The ``(coef, power)`` term with the largest power; it rules psi at infinity."""
        return max(self.terms, key=lambda cp: cp[1])

    @property
    def tail_index(self):
        return self.dominant_term[1]

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for coef, power in self.terms:
            out = out + coef * lam**power
        return out if out.ndim else float(out)

    def psi_prime(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for coef, power in self.terms:
            out = out + coef * power * lam ** (power - 1.0)
        return out if out.ndim else float(out)

    def describe(self):
        return self.spec.to_dict()


def _largest_root(psi, slope0):
    if slope0 >= 0:
        return 0.0
    hi = 1.0
    while psi(hi) <= 0:
        hi *= 2.0
    lo = 0.0
    # psi < 0 on (0, root) and > 0 beyond, so plain bisection on the sign,
    # carried to full double resolution
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if psi(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(psi(lo)) <= abs(psi(hi)) else hi


def make_mechanism(spec):
    """Build a :class:`BranchingMechanism` from a spec (or a config dict)."""
    if isinstance(spec, dict):
        spec = MechanismSpec.from_dict(spec)
    slope0 = spec.a or 0.0
    if slope0 > 0:
        crit = Criticality.SUBCRITICAL
    elif slope0 < 0:
        crit = Criticality.SUPERCRITICAL
    else:
        crit = Criticality.CRITICAL

    def psi(lam):
        return sum(c * lam**p for c, p in spec.terms())

    return BranchingMechanism(spec, float(slope0), _largest_root(psi, slope0), crit)


def eval_psi(m, lam):
    if np.any(np.asarray(lam) < 0):
        raise OutOfRange("lambda", lam, "lambda >= 0")
    return m.psi(lam)


def grey_condition(m):
    """True iff the process dies out in finite time almost surely.

    ``int^inf du/psi(u)`` is finite exactly when the tail power exceeds 1,
    which is decided from the preset terms without any quadrature.
    """
    if not m.terms:
        return False
    return m.tail_index > 1.0 and m.psi_prime_zero >= 0.0


@dataclass(frozen=True)
class Exponents:
    gamma: float
    eta: float
    delta: float
    witness_Q: float
    witness_C: float
    witness_c: float

    def to_dict(self):
        return dict(self.__dict__)


def _log_inf_ratio(log_psi, log_lam, c):
    # log of inf_{u <= v} g(v)/g(u) with g = psi * lam**-c, via a running max
    lg = log_psi - c * log_lam
    return float(np.min(lg - np.maximum.accumulate(lg)))


def estimate_exponents(m, grid=None, slope_tol=0.02, c_tol=1e-3):
    """Lower/upper exponents at infinity and the exponent ``delta``.

    ``gamma`` and ``eta`` are the min and max chord slopes of ``log psi``
    against ``log lam`` over the upper half of the grid.  ``delta`` is found
    by bisection as the largest ``c`` for which ``psi(lam) * lam**-c`` is
    almost increasing on that tail window, meaning every ratio
    ``g(v)/g(u)`` with ``u <= v`` stays above ``span**-slope_tol``.  A
    finite window cannot separate slopes closer than ``slope_tol``, so the
    result is capped at ``gamma``.  The witness ``Q`` is the infimum ratio at
    ``c = delta`` over the whole grid, and ``C = 1/Q``.
    """
    grid = DEFAULT_EXPONENT_GRID if grid is None else np.asarray(grid, dtype=float)
    grid = np.sort(grid)
    if grid.size < 4 or grid[0] < 1.0 - 1e-12 or math.log10(grid[-1] / grid[0]) < 6.0 - 1e-9:
        raise GridTooSmall("exponent grid must lie in [1, inf) and span at least 6 decades")
    psi = np.asarray(m.psi(grid))
    tail = slice(grid.size // 2, None)
    lam_t, psi_t = grid[tail], psi[tail]
    if np.any(psi_t <= 0):
        raise GridTooSmall("psi is not positive on the upper half of the grid")
    log_lam, log_psi = np.log(lam_t), np.log(psi_t)
    slopes = np.diff(log_psi) / np.diff(log_lam)
    gamma, eta = float(slopes.min()), float(slopes.max())

    floor = -slope_tol * (log_lam[-1] - log_lam[0])
    lo, hi = 0.0, 3.0
    while hi - lo > c_tol:
        mid = 0.5 * (lo + hi)
        if _log_inf_ratio(log_psi, log_lam, mid) >= floor:
            lo = mid
        else:
            hi = mid
    delta = min(lo, gamma)

    pos = psi > 0
    q = math.exp(_log_inf_ratio(np.log(psi[pos]), np.log(grid[pos]), delta))
    return Exponents(gamma, eta, delta, q, 1.0 / q, delta)
