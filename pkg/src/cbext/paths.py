"""Spectrally positive Levy paths with Laplace exponent ``psi``.

``E[exp(-lam X_t)] = exp(t psi(lam))``, so each power term of ``psi`` maps to
an exact increment law: ``a lam`` is the drift ``-a dt``, ``beta lam^2`` is a
Gaussian with variance ``2 beta dt`` and ``c lam^alpha`` is a totally
right-skewed strictly stable variable of scale ``(c dt)^(1/alpha)``.

Random numbers come from numpy in blocks keyed by ``(seed, path_index)``;
the step loop itself runs under numba.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import OutOfRange, StepPolicyInvalid

RUNNING, CROSSING, FLOOR, HORIZON, CB_HORIZON, MAX_STEPS = range(6)
STOP_REASONS = ("running", "crossing", "floor", "horizon", "cb_horizon", "max_steps")


# -- step policies ----------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StepPolicyInvalid(f"Fixed step needs 0 < dt < inf, got {self.dt}")

    def encode(self, m):
        return 0, self.dt, self.dt, self.dt


@dataclass(frozen=True)
class _Clamped:
    eps: float = 1e-3
    dt_min: float = 1e-300
    dt_max: float = math.inf

    def __post_init__(self):
        if not (0 < self.eps < 1):
            raise StepPolicyInvalid(f"eps must lie in (0, 1), got {self.eps}")
        if not (0 < self.dt_min <= self.dt_max):
            raise StepPolicyInvalid("need 0 < dt_min <= dt_max")


@dataclass(frozen=True)
class AdaptiveLamperti(_Clamped):
    """``dt = clamp(eps * X)``: every step advances the Lamperti clock by about ``eps``."""

    def encode(self, m):
        return 1, self.eps, self.dt_min, self.dt_max


@dataclass(frozen=True)
class RelativeMove(_Clamped):
    """``dt = clamp(eps * X^m / A)`` for the dominant term ``A lam^m`` of psi.

    Each step then moves ``X`` by a fixed fraction of itself, so the path
    stays resolved all the way down to extinction; clock increments shrink
    in proportion to the remaining time.
    """

    def encode(self, m):
        return 2, self.eps, self.dt_min, self.dt_max


def policy_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    table = {"fixed": Fixed, "adaptive": AdaptiveLamperti, "relative": RelativeMove}
    if kind not in table:
        raise StepPolicyInvalid(f"unknown step policy {kind!r}; expected one of {sorted(table)}")
    try:
        return table[kind](**d)
    except TypeError as exc:
        raise StepPolicyInvalid(str(exc)) from None


def policy_to_dict(p):
    kind = {Fixed: "fixed", AdaptiveLamperti: "adaptive", RelativeMove: "relative"}[type(p)]
    return {"kind": kind, **p.__dict__}


# -- random variates ------------------------------------------------------


def standard_stable(alpha, size, rng):
    """Chambers-Mallows-Stuck draws with ``E[exp(-lam S)] = exp(lam^alpha)``.

    Totally right-skewed (beta = 1), ``1 < alpha <= 2``.  In the S1
    parameterisation the Laplace exponent is ``sigma^alpha / |cos(pi alpha/2)|``,
    which fixes ``sigma``.
    """
    if not 1.0 < alpha <= 2.0:
        raise OutOfRange("alpha", alpha, "alpha in (1, 2]")
    v = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.exponential(1.0, size)
    tan_pa = math.tan(0.5 * math.pi * alpha)
    b = math.atan(tan_pa) / alpha
    s = (1.0 + tan_pa**2) ** (0.5 / alpha)
    x = (
        s
        * np.sin(alpha * (v + b))
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha)
    )
    sigma = abs(math.cos(0.5 * math.pi * alpha)) ** (1.0 / alpha)
    return sigma * x


def levy_increment(m, dt, size, rng):
    """Exact draws of ``X_dt - X_0`` for the mechanism's Levy process (no killing)."""
    if not dt > 0:
        raise OutOfRange("dt", dt, "dt > 0")
    spec = m.spec
    out = np.full(size, -(spec.a or 0.0) * dt)
    if spec.beta:
        out += math.sqrt(2.0 * spec.beta * dt) * rng.standard_normal(size)
    if spec.c_plus:
        out += (spec.c_plus * dt) ** (1.0 / spec.alpha) * standard_stable(spec.alpha, size, rng)
    return out


# -- the step loop ----------------------------------------------------------


@numba.njit(cache=True)
def _advance(state, z, s, prm, out_t, out_x, out_c, n_out, record, ck, ck_val, ck_pos):
    a, beta, c, alpha = prm[0], prm[1], prm[2], prm[3]
    kind, p1, dt_min, dt_max = prm[4], prm[5], prm[6], prm[7]
    dom_coef, dom_pow, horizon, cb_horizon, floor = prm[8], prm[9], prm[10], prm[11], prm[12]
    resolve = prm[13] > 0
    t, x, clock = state[0], state[1], state[2]
    status = RUNNING
    used = 0
    inv_alpha = 1.0 / alpha if c > 0 else 0.0
    for i in range(z.shape[0]):
        used = i + 1
        if kind == 0:
            dt = p1
        else:
            if kind == 1:
                dt = p1 * x
            else:
                dt = p1 * x**dom_pow / dom_coef
            dt = min(max(dt, dt_min), dt_max)
        if resolve and t + dt <= t:
            # the Levy clock can no longer resolve the step; treat as extinct
            used = i
            status = FLOOR
            break
        at_horizon = False
        if t + dt >= horizon:
            dt = horizon - t
            at_horizon = True
        dx = -a * dt
        if beta > 0:
            dx += math.sqrt(2.0 * beta * dt) * z[i]
        if c > 0:
            dx += (c * dt) ** inv_alpha * s[i]
        xn = x + dx
        prev_clock, prev_x = clock, x
        if xn <= 0.0:
            # linear localisation of the crossing; the clock over the last
            # piece uses a square-root approach to zero, which integrates to 2h/x
            h = dt * x / (x - xn)
            clock += 2.0 * h / x
            t += h
            x = 0.0
            status = CROSSING
        else:
            clock += 0.5 * dt * (1.0 / x + 1.0 / xn)
            t += dt
            x = xn
            if x <= floor:
                status = FLOOR
            elif at_horizon:
                status = HORIZON
            elif clock >= cb_horizon:
                status = CB_HORIZON
        while ck_pos[0] < ck.shape[0] and ck[ck_pos[0]] <= clock:
            w = (ck[ck_pos[0]] - prev_clock) / (clock - prev_clock)
            ck_val[ck_pos[0]] = prev_x + w * (x - prev_x)
            ck_pos[0] += 1
        if record:
            out_t[n_out[0]] = t
            out_x[n_out[0]] = x
            out_c[n_out[0]] = clock
            n_out[0] += 1
        if status != RUNNING:
            break
    state[0], state[1], state[2] = t, x, clock
    return status, used


def _params(m, policy, horizon, cb_horizon, floor, resolve):
    spec = m.spec
    kind, p1, dt_min, dt_max = policy.encode(m)
    dom_coef, dom_pow = m.dominant_term
    return np.array(
        [
            spec.a or 0.0,
            spec.beta or 0.0,
            spec.c_plus or 0.0,
            spec.alpha or 2.0,
            kind,
            p1,
            dt_min,
            dt_max,
            dom_coef,
            dom_pow,
            horizon,
            cb_horizon,
            floor,
            1.0 if resolve else 0.0,
        ],
        dtype=float,
    )


def floor_tail_clock(m, x):
    """Clock mass left below the extinction floor ``x``.

    Equals ``int_{1/x}^inf du/(A u^m)`` for the dominant term, the leading
    behaviour of ``phi(1/x)``.
    """
    coef, power = m.dominant_term
    return x ** (power - 1.0) / (coef * (power - 1.0))


@dataclass(frozen=True)
class RawRun:
    times: np.ndarray | None
    values: np.ndarray | None
    clock: np.ndarray | None
    status: int
    clock_last: float
    x_last: float
    steps: int
    checkpoints: np.ndarray


def _simulate(
    m,
    x0,
    policy,
    seed,
    index,
    horizon=math.inf,
    cb_horizon=math.inf,
    floor_ratio=1e-9,
    record=True,
    checkpoints=None,
    max_steps=50_000_000,
    block=1024,
    resolve_levy=True,
):
    if not x0 > 0:
        raise OutOfRange("x0", x0, "x0 > 0")
    if not isinstance(policy, (Fixed, AdaptiveLamperti, RelativeMove)):
        raise StepPolicyInvalid(f"unsupported step policy {policy!r}")
    prm = _params(m, policy, horizon, cb_horizon, floor_ratio * x0, resolve_levy)
    rng = np.random.default_rng([int(seed), int(index)])
    spec = m.spec
    state = np.array([0.0, float(x0), 0.0])
    ck = np.asarray(checkpoints if checkpoints is not None else [], dtype=float)
    ck_val = np.full(ck.shape, np.nan)
    ck_pos = np.zeros(1, dtype=np.int64)
    cap = block * 4 if record else 1
    out_t = np.empty(cap)
    out_x = np.empty(cap)
    out_c = np.empty(cap)
    n_out = np.zeros(1, dtype=np.int64)
    if record:
        out_t[0], out_x[0], out_c[0] = 0.0, x0, 0.0
        n_out[0] = 1
    steps = 0
    status = RUNNING
    while status == RUNNING:
        z = rng.standard_normal(block) if spec.beta else np.zeros(block)
        s = standard_stable(spec.alpha, block, rng) if spec.c_plus else np.zeros(block)
        if record and n_out[0] + block > out_t.size:
            new = max(2 * out_t.size, n_out[0] + block)
            out_t = np.resize(out_t, new)
            out_x = np.resize(out_x, new)
            out_c = np.resize(out_c, new)
        status, used = _advance(state, z, s, prm, out_t, out_x, out_c, n_out, record, ck, ck_val, ck_pos)
        steps += used
        if status == RUNNING and steps >= max_steps:
            status = MAX_STEPS
        block = min(block * 2, 65536)
    n = int(n_out[0])
    return RawRun(
        out_t[:n].copy() if record else None,
        out_x[:n].copy() if record else None,
        out_c[:n].copy() if record else None,
        int(status),
        float(state[2]),
        float(state[1]),
        steps,
        ck_val,
    )


# -- sample paths -----------------------------------------------------------


@dataclass(frozen=True)
class SamplePath:
    """A discretised Levy trajectory on its own clock.

    ``stop_reason`` says why the simulation ended; for ``"floor"`` stops
    ``tail_clock`` holds the Lamperti-clock mass attributed to the unsimulated
    stretch below the floor.
    """

    times: np.ndarray
    values: np.ndarray
    tau0_index: int | None = None
    seed: tuple = (None, None)
    stop_reason: str = "horizon"
    tail_clock: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_arrays(cls, times, values, **kw):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape or times.ndim != 1 or times.size == 0:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if times[0] != 0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        hit = np.flatnonzero(values <= 0)
        tau0 = int(hit[0]) if hit.size else None
        if tau0 is not None:
            times, values = times[: tau0 + 1], values[: tau0 + 1]
            kw.setdefault("stop_reason", "crossing")
        return cls(times, values, tau0, **kw)

    @property
    def x0(self):
        return float(self.values[0])

    @property
    def tau0(self):
        return None if self.tau0_index is None else float(self.times[self.tau0_index])


def simulate_path(m, x0, policy, horizon=math.inf, seed=0, index=0, cb_horizon=math.inf,
                  floor_ratio=1e-9, max_steps=50_000_000):
    """Simulate one path until it crosses zero, falls below ``floor_ratio * x0``,
    or reaches a horizon (Levy clock ``horizon`` or Lamperti clock ``cb_horizon``).
    """
    raw = _simulate(m, x0, policy, seed, index, horizon, cb_horizon, floor_ratio, True, None, max_steps)
    reason = STOP_REASONS[raw.status]
    tail = floor_tail_clock(m, raw.x_last) if raw.status == FLOOR else 0.0
    tau0 = raw.times.size - 1 if raw.status == CROSSING else None
    meta = {"mechanism": m.describe(), "policy": policy_to_dict(policy), "steps": raw.steps}
    return SamplePath(raw.times, raw.values, tau0, (seed, index), reason, tail, meta)


def running_infimum(p):
    return np.minimum.accumulate(np.asarray(p.values if isinstance(p, SamplePath) else p))


def first_passage_above(p, y):
    """First sample time with value ``>= y``, or ``None``."""
    if not y > 0:
        raise OutOfRange("y", y, "y > 0")
    hit = np.flatnonzero(p.values >= y)
    return float(p.times[hit[0]]) if hit.size else None


def last_passage_below(p, y):
    """Last sample time with value ``<= y``, or ``None``."""
    if not y > 0:
        raise OutOfRange("y", y, "y > 0")
    hit = np.flatnonzero(p.values <= y)
    return float(p.times[hit[-1]]) if hit.size else None


def downward_violations(p, m, k=12.0):
    """Indices of downward moves too large for a process without negative jumps.

    The allowed drop over a step ``dt`` is the drift plus ``k`` standard
    scales of the Gaussian and stable parts (whose left tails are light).
    """
    spec = m.spec
    dt = np.diff(p.times)
    bound = max(spec.a or 0.0, 0.0) * dt
    if spec.beta:
        bound = bound + k * np.sqrt(2.0 * spec.beta * dt)
    if spec.c_plus:
        bound = bound + k * (spec.c_plus * dt) ** (1.0 / spec.alpha)
    drop = -np.diff(p.values)
    bad = drop > bound
    if p.tau0_index is not None:
        bad[-1] = False  # the crossing segment is truncated at zero
    return np.flatnonzero(bad)


# -- binary dump ------------------------------------------------------------

_MAGIC = b"CBXP"


def write_path_binary(p, fh, mechanism_spec, seed):
    """Header ``{preset, params, seed}`` as length-prefixed JSON, then
    little-endian ``(t, value)`` double pairs.
    """
    params = {k: v for k, v in mechanism_spec.to_dict().items() if k != "preset"}
    header = {"preset": mechanism_spec.preset, "params": params, "seed": seed, "n": int(p.times.size)}
    blob = json.dumps(header, sort_keys=True).encode()
    fh.write(_MAGIC)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)
    pairs = np.empty((p.times.size, 2), dtype="<f8")
    pairs[:, 0], pairs[:, 1] = p.times, p.values
    fh.write(pairs.tobytes())


def read_path_binary(fh):
    if fh.read(4) != _MAGIC:
        raise ValueError("not a path dump")
    (size,) = struct.unpack("<I", fh.read(4))
    header = json.loads(fh.read(size).decode())
    pairs = np.frombuffer(fh.read(16 * header["n"]), dtype="<f8").reshape(-1, 2)
    return header, SamplePath.from_arrays(pairs[:, 0].copy(), pairs[:, 1].copy())
