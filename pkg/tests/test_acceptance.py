"""End-to-end acceptance checks; a PASS/FAIL line per criterion is printed in the terminal summary."""
import math
import time

import numpy as np
import pytest

import models
from xycurve.bootstrap import bootstrap
from xycurve.cli import main
from xycurve.config import economy_from_curves
from xycurve.conversion import q_forward, q_spot, quanto_bond
from xycurve.instruments import (FraSpec, FxSpec, SwapSpec, fra_dm_value, fra_em_value, fx_forward,
                                 fx_libor_forward, fx_triangle_gap, inflation_fx_forward, irs_dm_value,
                                 irs_em_value, ns_variant_ibor)
from xycurve.lrts import lrts_decompose, whk_build, whk_quadrature
from xycurve.mc import domination_check, martingale_test, measure_consistency, noarb_strategy, simulate
from xycurve.term import Curve, QuoteSet, Schedule

N_MC = 100_000


def quotes(market="y"):
    return QuoteSet(market, (0.25, 0.06), ((0.25, 0.5, 0.065), (0.5, 0.75, 0.07), (0.75, 1.0, 0.072)),
                    ((2.0, 0.075), (3.0, 0.078), (5.0, 0.08)))


def reprice(curve, qs, discount=None):
    """Fair rates of the input quotes computed from scratch with the pricers."""
    if discount is None:
        fra = lambda s, e: fra_em_value(curve, None, 0.0, FraSpec(s, e)).fair_rate
        swap = lambda m: irs_em_value(curve, None, 0.0, SwapSpec(Schedule.regular(0.0, m, 0.25))).fair_rate
    else:
        econ = economy_from_curves([discount.with_label("x"), curve.with_label("y")])
        s0 = econ.initial_state()
        fra = lambda s, e: fra_dm_value(econ["x"], econ["y"], s0, 0.0, FraSpec(s, e)).fair_rate
        swap = lambda m: irs_dm_value(econ["x"], econ["y"], s0, 0.0,
                                      SwapSpec(Schedule.regular(0.0, m, 0.25), rate_market="x")).fair_rate
    errors = [fra(0.0, qs.deposit[0]) - qs.deposit[1]]
    errors += [fra(s, e) - q for s, e, q in qs.fras]
    errors += [swap(m) - q for m, q in qs.swaps]
    return np.abs(errors)


@pytest.mark.criterion(1, "bootstrap round-trip in three conventions")
@pytest.mark.parametrize("mode", ["emerging", "developed", "practitioner"])
def test_bootstrap_round_trip(mode):
    qs = quotes()
    discount = Curve.flat(0.05, "x") if mode == "developed" else None
    start = time.perf_counter()
    result = bootstrap(qs, mode, discount)
    elapsed = time.perf_counter() - start
    errors = reprice(result.curve, qs, discount)
    assert errors.size == 7
    assert errors.max() < 1e-10
    assert elapsed < 1.0


@pytest.mark.criterion(2, "quanto-bond identity")
def test_quanto_bond_identity():
    econ = models.rational()
    mx, my = econ["x"], econ["y"]
    ts, states = models.random_states(econ, 1000, 11)
    for t, state, T in zip(ts, states, ts + np.linspace(0.1, 5.0, 1000)):
        via_forward = mx.conditional_bond(state, t, T) * q_forward(mx, my, state, t, T)
        via_spot = q_spot(mx, my, state, t) * my.conditional_bond(state, t, T)
        assert abs(via_forward - via_spot) <= 1e-12

    x_curve = Curve.flat(0.05, "x")
    y_curve = bootstrap(quotes(), "developed", x_curve).curve
    det = economy_from_curves([x_curve, y_curve.with_label("y")])
    s0 = det.initial_state()
    for t in np.linspace(0.0, 5.0, 41):
        assert abs(quanto_bond(det["x"], det["y"], s0, 0.0, t) - y_curve.df(t)) <= 1e-12


@pytest.mark.criterion(3, "dual-representation pricing")
def test_dual_representation_pricing():
    econ = models.rational()
    mx, my = econ["x"], econ["y"]
    ts, states = models.random_states(econ, 1000, 12)
    worst = 0.0
    for t, state in zip(ts, states):
        res = fra_dm_value(mx, my, state, t, FraSpec(t + 0.5, t + 0.75, strike_y=0.04))
        worst = max(worst, abs(res.representations["converted_rate"] - res.representations["quanto_bonds"]))
    assert worst <= 1e-12

    for econ in (models.rational(), models.lrts(), models.hjm()):
        m = econ["y"]
        ts, states = models.random_states(econ, 200, 13)
        for t, state in zip(ts, states):
            fra = FraSpec(t + 0.25, t + 0.5, strike_y=0.03)
            assert abs(fra_dm_value(m, m, state, t, fra).value - fra_em_value(m, state, t, fra).value) <= 1e-12
            swap = SwapSpec(Schedule.regular(t + 0.1, t + 2.1, 0.5), 0.035)
            assert abs(irs_dm_value(m, m, state, t, swap).value - irs_em_value(m, state, t, swap).value) <= 1e-12


def _martingale_suite(restricted, broken, unrestricted):
    x, y = "x", "y"
    tp, tn = models.PERIOD
    good = simulate(restricted, models.GRID, N_MC, 21, maturities=models.MATURITIES)
    for T in models.MATURITIES:
        assert martingale_test(good, ("hP", x, T)).passed
        assert martingale_test(good, ("hP", y, T)).passed
    assert martingale_test(good, ("hPL", x, y, tp, tn)).passed
    assert martingale_test(good, ("hPv", x, y, tp, tn)).passed

    bad = simulate(broken, models.GRID, N_MC, 22, maturities=models.MATURITIES)
    assert not martingale_test(bad, ("hP", y, 2.0)).passed
    assert not martingale_test(bad, ("hPL", x, y, tp, tn)).passed
    loose = simulate(unrestricted, models.GRID, N_MC, 23, maturities=models.MATURITIES)
    assert not martingale_test(loose, ("hPv", x, y, tp, tn)).passed


@pytest.mark.criterion(4, "martingale suite with negative controls")
@pytest.mark.parametrize("family", ["rational_mult", "lrts", "hjm_gauss"])
def test_martingale_suite(family):
    start = time.perf_counter()
    if family == "rational_mult":
        _martingale_suite(models.rational(), models.rational(broken_y=0.05), models.rational(restricted=False))
    elif family == "lrts":
        _martingale_suite(models.lrts(), models.lrts(drift_shift=0.2), models.lrts(restricted=False))
    else:
        _martingale_suite(models.hjm(), models.hjm(drift_shift_y=0.01), models.hjm(restricted=False))
    assert time.perf_counter() - start < 60.0


@pytest.mark.criterion(5, "FCF domination and the reversed-ordering rate inequality")
def test_fcf_domination():
    # y carries a deterministic 1% spread over x, so h^y <= h^x on every path
    econ = models.spread_pair()
    scen = simulate(econ, models.GRID, 10_000, 31, maturities=models.MATURITIES)
    assert np.all(scen.h["y"] <= scen.h["x"] * (1 + 1e-14))
    res = domination_check(scen, "x", "y", *models.PERIOD)
    assert res["states_checked"] >= 10_000
    assert res["violations"] == 0

    # reversed roles: the lower-rate market is now the forecast market
    mx, my = econ["y"], econ["x"]
    tp, tn = models.PERIOD
    checked = 0
    for j, t in enumerate(scen.times):
        s = scen.states[:, j]
        ordered = np.asarray(mx.kernel_value(s, t)) <= np.asarray(my.kernel_value(s, t))
        rate, _ = ns_variant_ibor(mx, my, s, t, tp, tn)
        l_x = (np.asarray(mx.conditional_bond(s, t, tp)) / np.asarray(mx.conditional_bond(s, t, tn)) - 1) / (tn - tp)
        assert np.all(np.asarray(rate)[ordered] >= l_x[ordered] - 1e-15)
        checked += int(ordered.sum())
    assert checked >= 10_000


@pytest.mark.criterion(6, "LRTS decomposition and heat-kernel reproduction")
def test_lrts_decomposition():
    econ = models.lrts()
    model = econ["x"]
    additive = lrts_decompose(model)
    t_grid = np.linspace(0.0, 2.0, 10)
    scen = simulate(econ, t_grid, 1000, 41, maturities=[])
    worst = 0.0
    for j, t in enumerate(t_grid):
        states = scen.states[:, j]
        for T in t + np.linspace(0.0, 10.0, 10):
            closed = np.asarray(model.conditional_bond(states, t, T))
            split = np.asarray(additive.conditional_bond(states, t, T))
            worst = max(worst, float(np.max(np.abs(closed - split))))
    assert worst <= 1e-12

    whk = whk_build(model, [0.7, 0.9])
    for j in (0, 3, 9):
        t = t_grid[j]
        for state in scen.states[:20, j]:
            value, _ = whk_quadrature(whk, state, t)
            zeta = float(model.zeta(state, t))
            assert abs(value - zeta) / zeta < 1e-6


@pytest.mark.criterion(7, "no-arbitrage strategies")
def test_noarb_strategies():
    scen = simulate(models.rational(), models.GRID, 10_000, 51, maturities=models.MATURITIES)
    for variant, T in (("money-market", None), ("fixed-horizon", 2.0)):
        assert np.max(np.abs(noarb_strategy(scen, "x", "y", variant, True, T))) <= 1e-12

    det = simulate(models.deterministic(0.05, 0.07), models.GRID, 1000, 52, maturities=models.MATURITIES)
    mm = noarb_strategy(det, "x", "y", "money-market")
    fh = noarb_strategy(det, "x", "y", "fixed-horizon", maturity=2.0)
    for j, t in enumerate(models.GRID):
        assert np.max(np.abs(mm[:, j] - (math.exp(0.07 * t) - math.exp(0.05 * t)))) <= 1e-12
        assert np.max(np.abs(fh[:, j] - (math.exp(0.07 * 2.0) - math.exp(0.05 * 2.0)))) <= 1e-12


@pytest.mark.criterion(8, "measure consistency of FRA pricing routes")
def test_measure_consistency():
    fra = FraSpec(1.0, 1.5, strike_y=0.0)
    det = measure_consistency(models.deterministic(), "x", "y", fra)
    values = list(det.estimates.values())
    assert det.passed and max(values) - min(values) <= 1e-12
    assert abs(values[0] - det.closed_form) <= 1e-12

    rep = measure_consistency(models.hjm(restricted=False), "x", "y", fra, N_MC, 61)
    assert rep.passed
    # a 5% drift error shifts the forward-measure route by about 6.5 joint standard errors
    broken = measure_consistency(models.hjm(restricted=False, drift_shift_x=0.05), "x", "y", fra, N_MC, 61)
    assert not broken.passed


@pytest.mark.criterion(9, "FX and inflation coherence")
def test_fx_inflation_coherence():
    econ = models.three_market_rational()
    mx, my, mz = econ["x"], econ["y"], econ["z"]
    ts, states = models.random_states(econ, 500, 71)
    for t, state in zip(ts, states):
        T = t + 1.5
        chain = q_forward(mx, my, state, t, T) * q_forward(my, mz, state, t, T)
        assert abs(chain - q_forward(mx, mz, state, t, T)) <= 1e-12

        fx_xy, fx_yz = FxSpec(mx, my, 1.25), FxSpec(my, mz, 0.8)
        fx_xz = FxSpec(mx, mz, 1.25 * 0.8)
        assert fx_triangle_gap(fx_xy, fx_yz, fx_xz, state, t, T) <= 1e-12

        # x: domestic nominal, z: foreign real, y: foreign nominal
        res = inflation_fx_forward(mx, mz, my, 1.25, state, t, T)
        assert res.gap <= 1e-12
        q_direct = q_forward(mx, mz, state, t, T)
        assert abs(q_direct - q_forward(mx, my, state, t, T) * q_forward(my, mz, state, t, T)) <= 1e-12
        assert abs(inflation_fx_forward(mx, mz, my, 1.25, state, t, T, res.fair_rate).value) <= 1e-12

        fwd = fx_forward(fx_xy, state, t, T)
        assert abs(fx_forward(fx_xy, state, t, T, fwd.fair_rate).value) <= 1e-12
        lib = fx_libor_forward(mx, my, mz, 1.25, state, t, t + 0.5, t + 1.0)
        assert abs(fx_libor_forward(mx, my, mz, 1.25, state, t, t + 0.5, t + 1.0, lib.fair_rate).value) <= 1e-12
        fra = FraSpec(t + 0.5, t + 1.0)
        fair = fra_dm_value(mx, my, state, t, fra).fair_rate
        assert abs(fra_dm_value(mx, my, state, t, FraSpec(t + 0.5, t + 1.0, strike_x=fair)).value) <= 1e-12
        swap = SwapSpec(Schedule.regular(t + 0.5, t + 2.5, 0.5), 0.0, "x")
        fair = irs_dm_value(mx, my, state, t, swap).fair_rate
        swap = SwapSpec(swap.schedule, float(fair), "x")
        assert abs(irs_dm_value(mx, my, state, t, swap).value) <= 1e-12


@pytest.mark.criterion(10, "determinism of scenario files and reports")
def test_determinism(tmp_path):
    model = tmp_path / "model.json"
    import json
    model.write_text(json.dumps(models.rational_config()))
    outputs = []
    for run in ("a", "b"):
        scen = tmp_path / f"{run}.bin"
        report = tmp_path / f"{run}.json"
        assert main(["simulate", "--model", str(model), "--paths", "5000", "--horizon", "2", "--seed", "7",
                     "--out", str(scen)]) == 0
        main(["diagnose", "--scenario", str(scen), "--report", str(report)])
        outputs.append([scen.read_bytes(), (tmp_path / f"{run}.bin.json").read_bytes(), report.read_bytes()])
    assert outputs[0] == outputs[1]
