import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iucert import specialfn as sf
from iucert.errors import DomainError

E = math.e


def test_iter_log_identities():
    assert sf.iter_log(0, 5.0) == 5.0
    assert sf.iter_log(1, E) == pytest.approx(1.0, abs=1e-15)
    assert sf.iter_log(2, E**E) == pytest.approx(1.0, abs=1e-14)


def test_iter_log_domain():
    with pytest.raises(DomainError):
        sf.iter_log(2, 1.0)  # ln 1 = 0, then ln 0
    with pytest.raises(DomainError):
        sf.iter_log(-1, 2.0)


def test_f_km_examples():
    assert sf.f_km(2, 0, 3.0) == pytest.approx(9.0)
    assert sf.f_km(2, 1, E**2) == pytest.approx(4 * E**2, rel=1e-14)
    assert sf.f_km(1.5, 1, E) == pytest.approx(E, rel=1e-14)


@pytest.mark.parametrize("k,m,t", [(2.0, 1, 50.0), (1.3, 2, 1e5), (3.0, 3, 1e40), (1.1, 0, 7.0)])
def test_f_km_against_mpmath(k, m, t):
    mp.mp.dps = 40
    x = mp.mpf(t)
    prod = mp.mpf(1)
    for _ in range(m):
        prod *= x
        x = mp.log(x)
    ref = x**k * prod
    assert sf.f_km(k, m, t) == pytest.approx(float(ref), rel=1e-13)
    assert sf.log_f_km(k, m, t) == pytest.approx(float(mp.log(ref)), rel=1e-13)
    if m >= 1:
        assert sf.log_f_km_from_log(k, m, math.log(t)) == pytest.approx(float(mp.log(ref)), rel=1e-13)


def test_dlog_f_km_matches_mpmath_derivative():
    mp.mp.dps = 30
    for k, m, t in [(2.0, 1, 30.0), (1.5, 2, 200.0)]:
        fn = lambda x: mp.log(_mp_f(k, m, x))
        ref = mp.diff(fn, t)
        assert sf.dlog_f_km(k, m, t) == pytest.approx(float(ref), rel=1e-10)


def _mp_f(k, m, t):
    x = mp.mpf(t)
    prod = mp.mpf(1)
    for _ in range(m):
        prod *= x
        x = mp.log(x)
    return x**k * prod


def test_f_extended_junction_and_branch():
    p = sf.AuxParams(2.0, 1, 2.0)
    assert sf.f_extended(p, 2.0) == pytest.approx(sf.f_km(2.0, 0, 2.0))
    # below r0: f(r0) e^{q/r0 - 1} = 4 e^{-1/2}
    assert sf.f_extended(p, 1.0) == pytest.approx(4 * math.exp(-0.5), rel=1e-15)
    left = sf.f_extended(p, 2.0 - 1e-9)
    assert left == pytest.approx(sf.f_extended(p, 2.0), rel=1e-8)


def test_f_extended_limit_and_monotone():
    p = sf.AuxParams(1.5, 2, 3.0)
    qs = np.linspace(-200, 50, 2001)
    vals = sf.f_extended_array(p, qs)
    assert np.all(np.diff(vals) > 0)
    assert vals[0] < 1e-20 and vals[0] > 0


def test_aux_params_validation():
    with pytest.raises(DomainError):
        sf.AuxParams(1.0, 1, 1.0)
    with pytest.raises(DomainError):
        sf.AuxParams(2.0, 0, 1.0)
    with pytest.raises(DomainError):
        sf.AuxParams(2.0, 2, 0.5)  # ln 0.5 < 0


def test_g_inverse_round_trip():
    p = sf.AuxParams(2.0, 1, 1.0)
    y = sf.f_extended(p, math.log(10.0))
    assert sf.g_inverse(p, y) == pytest.approx(10.0, rel=1e-11)
    # forward value at x = e, then invert
    y = sf.f_extended(p, 1.0)
    assert sf.g_inverse(p, y) == pytest.approx(E, rel=1e-11)


@pytest.mark.parametrize("r", [-1.0, 0.0, 3.0])
def test_g_of_f_is_exp(r):
    p = sf.AuxParams(2.0, 1, 1.0)
    assert sf.g_inverse(p, sf.f_extended(p, r)) == pytest.approx(math.exp(r), rel=1e-11)


def test_g_log_beyond_double_range():
    p = sf.AuxParams(2.0, 1, 1.0)
    # f(x) = x^2 for x >= 1: g(e^ly) = exp(exp(ly/2))
    ly = 2 * math.log(5000.0)
    assert sf.g_log_from_log(p, ly) == pytest.approx(5000.0, rel=1e-12)


def test_young_examples():
    p = sf.AuxParams(2.0, 1, 1.0)
    b = sf.f_extended(p, 0.0)
    assert sf.young_bound(p, 1.0, b) >= b
    # a = g(b): bound - ab = a f(ln a) >= 0
    a = sf.g_inverse(p, 7.0)
    assert sf.young_bound(p, a, 7.0) - a * 7.0 == pytest.approx(a * sf.f_extended(p, math.log(a)), rel=1e-9)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(1e-6, 100.0), b=st.floats(1e-6, 100.0), k=st.floats(1.05, 4.0), m=st.integers(1, 2))
def test_young_property(a, b, k, m):
    r0 = 2.0 if m == 2 else 0.7
    p = sf.AuxParams(k, m, r0)
    assert sf.young_bound(p, a, b) >= a * b
