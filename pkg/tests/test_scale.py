import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma as gamma_fn

from cbext.errors import GridTooSmall, InversionUnstable, OutOfRange
from cbext.mechanism import MechanismSpec, make_mechanism
from cbext.scale import (
    InversionParams,
    ScaleFunction,
    euler_invert,
    hypothesis_h_check,
    make_scale,
    sandwich_scan,
    scale_eval,
    talbot_invert,
)

CLOSED = [MechanismSpec.stable(1, 1.5), MechanismSpec.quadratic(1), MechanismSpec.linear_quadratic(1, 1)]


def test_closed_form_values():
    w = make_scale(make_mechanism(MechanismSpec.stable(1, 1.5)))
    assert scale_eval(w, 1.0) == pytest.approx(1 / gamma_fn(1.5), rel=1e-15)
    assert scale_eval(make_scale(make_mechanism(MechanismSpec.quadratic(1))), 2.0) == 2.0
    lq = make_scale(make_mechanism(MechanismSpec.linear_quadratic(1, 1)))
    assert scale_eval(lq, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)


def test_rejects_nonpositive():
    w = make_scale(make_mechanism(MechanismSpec.quadratic(1)))
    with pytest.raises(OutOfRange):
        w(0.0)


@pytest.mark.parametrize("spec", CLOSED, ids=lambda s: s.preset)
def test_numeric_matches_closed(spec):
    m = make_mechanism(spec)
    closed, numeric = make_scale(m), make_scale(m, numeric=True)
    x = np.geomspace(1e-3, 1e3, 7)
    assert np.allclose(numeric(x), closed(x), rtol=1e-6, atol=0)


def test_supercritical_numeric_uses_shift():
    m = make_mechanism(MechanismSpec.linear_quadratic(-1, 1))
    x = np.array([0.1, 1.0, 5.0])
    assert np.allclose(make_scale(m, numeric=True)(x), make_scale(m)(x), rtol=1e-8)


def test_euler_cross_check():
    m = make_mechanism(MechanismSpec.stable_gaussian(1, 1.5, 1))
    w = make_scale(m)
    for x in (0.01, 1.0, 10.0):
        assert euler_invert(w._transform, x, nodes=32) == pytest.approx(w(x), rel=1e-8)


def test_talbot_known_pair():
    # 1/(s+1) <-> exp(-t)
    assert talbot_invert(lambda s: 1 / (s + 1), 2.0) == pytest.approx(math.exp(-2), rel=1e-14)


@pytest.mark.parametrize(
    "spec",
    CLOSED + [MechanismSpec.stable_gaussian(1, 1.5, 1), MechanismSpec.stable_drift(0.5, 1, 1.7)],
    ids=lambda s: s.preset,
)
def test_monotone_and_vanishing_at_zero(spec):
    w = make_scale(make_mechanism(spec))
    x = np.geomspace(1e-6, 1e2, 25)
    vals = w(x)
    assert np.all(np.diff(vals) >= 0)
    assert np.all(np.diff(vals[x < 10]) > 0)
    assert vals[0] < 1e-2


@pytest.mark.parametrize("spec", CLOSED + [MechanismSpec.stable_gaussian(1, 1.5, 1)], ids=lambda s: s.preset)
def test_transform_roundtrip(spec):
    m = make_mechanism(spec)
    w = make_scale(m, check=False)
    for lam in (0.5, 1.0, 5.0):
        val = 0.0
        # split at 1 and 40/lam so quad sees both the root-type start and the tail
        for lo, hi in ((0.0, 1.0), (1.0, 40.0 / lam), (40.0 / lam, 400.0 / lam)):
            if hi > lo:
                val += integrate.quad(lambda x: math.exp(-lam * x) * w(max(x, 1e-300)), lo, hi,
                                      epsabs=0, epsrel=1e-9, limit=200)[0]
        assert val == pytest.approx(1.0 / m.psi(lam), rel=1e-5)


def test_sandwich_stable():
    w = make_scale(make_mechanism(MechanismSpec.stable(1, 1.5)))
    rep = sandwich_scan(w, np.geomspace(1e-4, 1e4, 81))
    assert rep.min_product == pytest.approx(1 / gamma_fn(1.5), abs=1e-9)
    assert rep.max_product == pytest.approx(rep.min_product, abs=1e-9)
    assert rep.K == pytest.approx(gamma_fn(1.5), abs=1e-9)
    assert rep.consistent


def test_sandwich_quadratic_and_lq():
    rep = sandwich_scan(make_scale(make_mechanism(MechanismSpec.quadratic(1))), np.geomspace(1e-4, 1e4, 41))
    assert rep.min_product == pytest.approx(1.0) and rep.max_product == pytest.approx(1.0)
    lq = sandwich_scan(make_scale(make_mechanism(MechanismSpec.linear_quadratic(1, 1))), np.geomspace(1e-4, 1e4, 41))
    assert 0 < lq.min_product and np.isfinite(lq.max_product)
    assert lq.consistent and lq.K <= lq.min_product


def test_sandwich_grid_too_small():
    with pytest.raises(GridTooSmall):
        sandwich_scan(make_scale(make_mechanism(MechanismSpec.quadratic(1))), np.geomspace(1, 1e3, 10))


def test_hypothesis_h():
    stable = make_scale(make_mechanism(MechanismSpec.stable(1, 1.5)))
    (half,) = hypothesis_h_check(stable, [0.5])
    assert half.estimate == pytest.approx(0.5**0.5, abs=1e-12) and half.verdict
    quad = make_scale(make_mechanism(MechanismSpec.quadratic(1)))
    (nine,) = hypothesis_h_check(quad, [0.9])
    assert nine.estimate == pytest.approx(0.9) and nine.verdict
    (one,) = hypothesis_h_check(quad, [1.0])
    assert one.estimate == 1.0 and not one.verdict
    with pytest.raises(OutOfRange):
        hypothesis_h_check(quad, [1.5])


@given(st.floats(0.05, 0.99), st.floats(1.05, 2.0))
def test_hypothesis_h_stable_power(b, alpha):
    w = make_scale(make_mechanism(MechanismSpec.stable(1, alpha)))
    (res,) = hypothesis_h_check(w, [b])
    assert res.estimate == pytest.approx(b ** (alpha - 1), rel=1e-12)


def test_inversion_unstable_detected():
    # without the shift the pole of 1/psi at the positive root sits right of
    # the contour and the refinements run away
    m = make_mechanism(MechanismSpec.linear_quadratic(-1, 1))
    w = ScaleFunction(m, None)
    w._shift = 0.0
    with pytest.raises(InversionUnstable):
        w(20.0)
