import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from oracles import half_bessel_k
from robinheat.bessel import (
    EULER_GAMMA,
    bessel_k,
    k_large_argument,
    k_small_argument,
    kv,
)
from robinheat.errors import BesselRangeError


def test_half_order_at_one():
    assert bessel_k(0.5, 1.0).value == pytest.approx(math.sqrt(math.pi / 2) / math.e, rel=1e-14)


def test_k0_small_argument():
    v = bessel_k(0, 1e-4).value
    assert v == pytest.approx(-math.log(5e-5) - EULER_GAMMA, rel=1e-4)
    assert k_small_argument(0, 1e-4) == pytest.approx(-math.log(5e-5) - EULER_GAMMA)


def test_k1_large_argument():
    v = bessel_k(1, 50.0).value
    assert v == pytest.approx(math.sqrt(math.pi / 100) * math.exp(-50), rel=0.02)
    assert k_large_argument(50.0) == pytest.approx(math.sqrt(math.pi / 100) * math.exp(-50))


@pytest.mark.parametrize("x", np.geomspace(0.1, 50, 60))
def test_half_order_closed_form(x):
    assert bessel_k(0.5, x).value == pytest.approx(half_bessel_k(x), rel=1e-12)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.0])
def test_branches_agree_on_band(nu):
    for x in np.linspace(4, 8, 17):
        s = bessel_k(nu, x, method="series").value
        c = bessel_k(nu, x, method="continued_fraction").value
        assert s == pytest.approx(c, rel=1e-10)


@pytest.mark.parametrize("nu", [0.0, 0.3, 0.5, 1.0, 2.0, 3.7, 10.0])
def test_matches_scipy(nu):
    xs = np.geomspace(1e-6, 600, 80)
    ref = special.kv(nu, xs)
    ok = np.isfinite(ref) & (ref > 0)
    np.testing.assert_allclose(kv(nu, xs[ok]), ref[ok], rtol=1e-10)


def test_regime_tags():
    assert bessel_k(1.0, 0.5).regime == "series"
    assert bessel_k(1.0, 5.0).regime == "continued_fraction"


def test_range_errors():
    with pytest.raises(BesselRangeError):
        bessel_k(0.0, 800.0)
    with pytest.raises(BesselRangeError):
        bessel_k(200.0, 1e-5)


@given(nu=st.floats(0, 5), x=st.floats(1e-3, 100), dx=st.floats(1e-3, 1.0))
def test_positive_and_decreasing(nu, x, dx):
    a = bessel_k(nu, x).value
    b = bessel_k(nu, x + dx).value
    assert a > 0 and b > 0
    assert b < a
