import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import models
from xycurve.kernels import (AdditiveRationalModel, BrownianDriver, DerivedKernelModel, ExpDecay,
                             ExponentialMartingale, PowerTransform, RationalFactor, RationalMultiplicativeModel,
                             ScaledTransform, deterministic_model, derive_kernel, rational_spread,
                             short_rate_rational)
from xycurve.mc import simulate
from xycurve.term import Curve


def one_factor(b, vol=0.5, curve=None, shift=0.0):
    driver = BrownianDriver(1)
    factor = RationalFactor(b, ExponentialMartingale(0, vol, shift))
    return RationalMultiplicativeModel("y", curve or Curve.flat(0.05), [factor], driver)


def state_for(a_value, vol, t):
    """Driver state at which ``exp(vol W - vol^2 t / 2) - 1`` equals ``a_value``."""
    return np.array([(math.log1p(a_value) + 0.5 * vol ** 2 * t) / vol])


def test_kernel_starts_at_one():
    for econ in (models.rational(), models.lrts(), models.hjm()):
        for m in econ.markets.values():
            assert m.kernel_value(econ.initial_state(), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_kernel_value_examples():
    det = deterministic_model(Curve.flat(0.05, "y"))
    assert det.kernel_value(np.zeros(0), 2.0) == pytest.approx(0.904837, abs=1e-6)
    model = one_factor(ExpDecay(0.1), curve=Curve.from_pillars("y", [(1.0, 0.95)]))
    assert model.kernel_value(state_for(0.5, 0.5, 1.0), 1.0) == pytest.approx(0.9975, abs=1e-14)


def test_conditional_bond_examples():
    det = deterministic_model(Curve.flat(0.05, "y"))
    assert det.conditional_bond(np.zeros(0), 1.0, 2.0) == pytest.approx(0.951229, abs=1e-6)
    model = one_factor(ExpDecay(0.5, 0.3))
    state = state_for(0.4, 0.5, 1.0)
    assert model.conditional_bond(state, 1.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        model.conditional_bond(state, 2.0, 1.0)


def test_conditional_bond_matches_monte_carlo_expectation():
    model = one_factor(ExpDecay(0.8, 0.5), vol=0.6)
    t, T = 1.0, 3.0
    state = state_for(0.3, 0.6, t)
    rng = np.random.default_rng(5)
    w_T = state[0] + math.sqrt(T - t) * rng.standard_normal(100_000)
    h_T = np.asarray(model.kernel_value(w_T[:, None], T))
    target = model.kernel_value(state, t) * model.conditional_bond(state, t, T)
    se = h_T.std(ddof=1) / math.sqrt(h_T.size)
    assert abs(h_T.mean() - target) < 3.5 * se


def test_short_rate_examples():
    flat = one_factor(ExpDecay(0.2))
    r, _ = short_rate_rational(flat, state_for(0.7, 0.5, 1.0), 1.0)
    assert r == pytest.approx(0.05, abs=1e-12)
    r, theta = short_rate_rational(one_factor(ExpDecay(0.3, 1.0)), state_for(0.0, 0.5, 2.0), 2.0)
    assert r == pytest.approx(0.05, abs=1e-12) and theta[0] == pytest.approx(0.0, abs=1e-15)
    decaying = one_factor(ExpDecay(0.1, 1.0))
    r, theta = short_rate_rational(decaying, state_for(1.0, 0.5, 0.0), 0.0)
    assert theta[0] == pytest.approx(-0.1 / 1.1, abs=1e-12)
    assert r == pytest.approx(0.140909, abs=1e-6)


def test_short_rate_finite_difference_fallback():
    model = one_factor(lambda t: 0.1 * np.exp(-np.asarray(t)))
    _, theta = short_rate_rational(model, state_for(1.0, 0.5, 0.5), 0.5)
    exact = -0.1 * math.exp(-0.5) / (1 + 0.1 * math.exp(-0.5))
    assert theta[0] == pytest.approx(exact, abs=1e-8)


def test_rational_spread_examples():
    driver = BrownianDriver(2)
    shared = RationalFactor(ExpDecay(0.4, 0.1), ExponentialMartingale(0, 0.3))
    extra = RationalFactor(ExpDecay(0.1, math.log(2.0)), ExponentialMartingale(1, 0.5))
    short = RationalMultiplicativeModel("y", Curve.flat(0.03), [shared], driver)
    longer = RationalMultiplicativeModel("y3", Curve.flat(0.035), [shared, extra], driver)
    state = np.array([0.2, math.log(1.2) / 0.5])
    spread, det, deltas = rational_spread(short, longer, state, 0.0, 1.0)
    assert deltas[0] == pytest.approx(1.01 / 1.02, abs=1e-14)
    assert det == pytest.approx(math.exp(-0.005), abs=1e-14)
    assert spread == pytest.approx(det * 0.990196, abs=1e-6)
    assert longer.conditional_bond(state, 0.0, 1.0) / short.conditional_bond(state, 0.0, 1.0) == \
        pytest.approx(spread, rel=1e-13)
    same, _, _ = rational_spread(short, short, state, 0.5, 2.0)
    assert same == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        rational_spread(longer, short, state, 0.0, 1.0)


def test_factor_loading_bounds_enforced():
    with pytest.raises(ValueError):
        one_factor(ExpDecay(1.5))
    driver = BrownianDriver(1)
    f = RationalFactor(ExpDecay(0.1), ExponentialMartingale(0, 0.2))
    with pytest.raises(ValueError):
        RationalMultiplicativeModel("y", Curve.flat(0.0), [f, f], driver)


def test_derived_kernel_linear_transforms():
    base = one_factor(ExpDecay(0.6, 0.2))
    state = state_for(0.25, 0.5, 1.0)
    for transform in (ScaledTransform(1.0), ScaledTransform(3.0)):
        derived = DerivedKernelModel("yhat", base, transform)
        h, p = derive_kernel(derived, state, 1.0, 2.5)
        assert p == pytest.approx(base.conditional_bond(state, 1.0, 2.5), abs=1e-15)
    with pytest.raises(ValueError):
        DerivedKernelModel("bad", base, ScaledTransform(-1.0))


def test_derived_kernel_square_matches_closed_form():
    vol, t, T = 0.5, 1.0, 2.0
    b = ExpDecay(0.6, 0.2)
    base = one_factor(b, vol=vol)
    derived = DerivedKernelModel("yhat", base, PowerTransform(2.0), n_inner=200_000, seed=3)
    state = state_for(0.25, vol, t)
    value, se = derived.derived_bond(state, t, T)
    # E[(1 + b A_T)^2 | F_t] with E[(A_T + 1)^2 | F_t] = (A_t + 1)^2 exp(vol^2 (T - t))
    a_t, b_T = 0.25, float(b(T))
    second = (a_t + 1) ** 2 * math.exp(vol ** 2 * (T - t)) - 2 * (a_t + 1) + 1
    expected_sq = 1 + 2 * b_T * a_t + b_T ** 2 * second
    p0 = base.curve
    h_t = float(base.kernel_value(state, t))
    exact = p0(T) ** 2 * expected_sq / h_t ** 2
    assert abs(value - exact) < 3.5 * se
    # Jensen: E[f(h_T)] >= f(E[h_T]) = f(h_t P_tT)
    jensen_floor = (h_t * base.conditional_bond(state, t, T)) ** 2 / h_t ** 2
    assert exact >= jensen_floor
    assert value >= jensen_floor - 3.5 * se


def test_additive_rational_forms_agree():
    driver = BrownianDriver(1)
    model = AdditiveRationalModel("y", Curve.flat(0.04), ExpDecay(0.3, 0.5), ExponentialMartingale(0, 0.4), driver)
    states = np.linspace(-1.0, 1.5, 11)[:, None]
    assert np.allclose(model.conditional_bond(states, 0.7, 3.0), model.normalized_bond(states, 0.7, 3.0),
                       atol=1e-14, rtol=0)
    assert model.kernel_value(np.zeros(1), 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("make", [models.rational, models.lrts, models.hjm])
def test_kernel_mean_matches_initial_curve(make):
    econ = make()
    times = [0.0, 0.5, 1.0, 5.0]
    scen = simulate(econ, times, 100_000, 17, maturities=[])
    for label, model in econ.markets.items():
        for j, T in enumerate(times[1:], start=1):
            h = scen.h[label][:, j]
            se = h.std(ddof=1) / math.sqrt(h.size)
            assert abs(h.mean() - model.initial_discount(T)) < 3.5 * se


def test_positivity_along_paths():
    econ = models.rational()
    scen = simulate(econ, np.linspace(0, 5, 11), 10_000, 19, maturities=[1.0, 5.0, 10.0])
    for label in econ.labels:
        assert np.all(scen.h[label] > 0.0)
        p = scen.P[label]
        assert np.all(p[np.isfinite(p)] > 0.0)


@given(st.floats(-0.9, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_rational_bonds_compose_through_expected_state(a_value, t, gap1, gap2):
    # the martingale's expected future value is its current value
    vol = 0.5
    model = one_factor(ExpDecay(0.7, 0.4), vol=vol)
    s, T = t + gap1, t + gap1 + gap2
    now, later = state_for(a_value, vol, t), state_for(a_value, vol, s)
    two_step = model.conditional_bond(now, t, s) * model.conditional_bond(later, s, T)
    assert model.conditional_bond(now, t, T) == pytest.approx(two_step, rel=1e-12)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_lrts_bonds_compose_through_expected_state(z1, z2, t, gap1, gap2):
    model = models.lrts()["x"]
    s, T = t + gap1, t + gap1 + gap2
    z = np.array([z1, z2])
    mean = model.driver.conditional_mean(z, s - t)
    two_step = model.conditional_bond(z, t, s) * model.conditional_bond(mean, s, T)
    assert model.conditional_bond(z, t, T) == pytest.approx(two_step, rel=1e-12)
