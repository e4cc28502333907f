import csv
import json
import math

import numpy as np
import pytest

import models
from xycurve.config import economy_from_curves
from xycurve.instruments import FraSpec
from xycurve.mc import (BLOCK_SIZE, ScenarioSet, domination_check, martingale_test, martingale_test_values,
                        measure_consistency, noarb_strategy, select_process, sidecar_path, simulate)
from xycurve.term import Curve


def test_martingale_test_rejects_small_samples():
    with pytest.raises(ValueError):
        martingale_test_values([0.0, 1.0], np.ones((999, 2)))
    scen = simulate(models.deterministic(), [0.0, 1.0], 500, 1, maturities=[2.0])
    with pytest.raises(ValueError):
        martingale_test(scen, ("hP", "x", 2.0))


def test_deterministic_model_is_exactly_flat():
    scen = simulate(models.deterministic(), [0.0, 0.5, 1.0], 1000, 1, maturities=[2.0])
    report = martingale_test(scen, ("hP", "y", 2.0))
    assert report.passed
    assert report.std_errors == [0.0, 0.0, 0.0]
    assert report.means[-1] == pytest.approx(math.exp(-0.14), abs=1e-15)


def test_rational_reference_passes_and_broken_compensator_fails():
    grid = models.GRID
    good = simulate(models.rational(), grid, 100_000, 3, maturities=[2.0])
    assert martingale_test(good, ("hP", "x", 2.0)).passed
    bad = simulate(models.rational(broken_x=0.01), grid, 100_000, 3, maturities=[2.0])
    assert not martingale_test(bad, ("hP", "x", 2.0)).passed


def test_martingale_report_is_json_ready():
    scen = simulate(models.rational(), models.GRID, 2000, 5, maturities=models.MATURITIES)
    report = martingale_test(scen, ("hPL", "x", "y", 1.0, 1.5))
    data = json.loads(json.dumps(report.to_dict()))
    assert data["name"] == "hPL/x/y/1.0/1.5" and data["n_paths"] == 2000
    assert len(data["times"]) == len(models.GRID)


def test_unknown_selector_rejected():
    scen = simulate(models.deterministic(), [0.0, 1.0], 10, 1, maturities=[])
    with pytest.raises(ValueError):
        select_process(scen, ("hQ", "x"))


def test_value_selector_uses_the_supplied_pricer():
    econ = models.rational()
    scen = simulate(econ, [0.0, 0.5, 1.0], 20_000, 7, maturities=[])
    fn = lambda states, t: econ["x"].conditional_bond(states, t, 3.0)
    assert martingale_test(scen, ("hV", "x", fn)).passed


def test_simulate_validates_its_grid():
    econ = models.deterministic()
    for grid in ([0.5, 1.0], [0.0], [0.0, 1.0, 1.0]):
        with pytest.raises(ValueError):
            simulate(econ, grid, 10, 1)


def test_path_blocks_do_not_depend_on_path_count():
    econ = models.rational()
    small = simulate(econ, [0.0, 1.0], 10, 9, maturities=[])
    big = simulate(econ, [0.0, 1.0], BLOCK_SIZE + 10, 9, maturities=[])
    assert np.array_equal(small.states, big.states[:10])
    other_stream = simulate(econ, [0.0, 1.0], 10, 9, maturities=[], stream=1)
    assert not np.array_equal(small.states, other_stream.states)


def test_scenario_round_trip(tmp_path):
    scen = simulate(models.rational(), [0.0, 0.5, 1.0], 50, 11, maturities=[1.0, 2.0])
    path = tmp_path / "scen.bin"
    sidecar = scen.save(path)
    assert sidecar == sidecar_path(path) and sidecar.exists()
    back = ScenarioSet.load(path)
    assert np.array_equal(back.states, scen.states)
    assert back.seed == 11 and back.labels == scen.labels
    for label in scen.labels:
        assert np.array_equal(back.h[label], scen.h[label])
        assert np.array_equal(back.P[label], scen.P[label], equal_nan=True)
    out = tmp_path / "scen.csv"
    scen.to_csv(out)
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 50 * 3 * 2
    first = rows[0]
    assert float(first["h"]) == scen.h[first["market"]][0, 0]
    assert float(first["P_2.0"]) == scen.P[first["market"]][0, 0, 1]


def test_truncated_scenario_rejected(tmp_path):
    scen = simulate(models.deterministic(), [0.0, 1.0], 20, 1)
    path = tmp_path / "s.bin"
    scen.save(path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        ScenarioSet.load(path)


def test_same_seed_gives_identical_bytes(tmp_path):
    for name in ("a", "b"):
        simulate(models.lrts(), [0.0, 0.25, 0.5], 300, 13, maturities=[1.0]).save(tmp_path / f"{name}.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.bin.json").read_bytes() == (tmp_path / "b.bin.json").read_bytes()


def test_noarb_strategy_examples():
    scen = simulate(models.deterministic(), [0.0, 1.0], 10, 1, maturities=[3.0])
    money = noarb_strategy(scen, "x", "y")
    assert money[0, 1] == pytest.approx(math.exp(0.07) - math.exp(0.05), abs=1e-14)
    assert money[0, 1] == pytest.approx(0.0212371, abs=1e-7)
    fixed = noarb_strategy(scen, "x", "y", "fixed-horizon", maturity=3.0)
    assert np.allclose(fixed, math.exp(0.21) - math.exp(0.15), atol=1e-13, rtol=0)
    for variant in ("money-market", "fixed-horizon"):
        assert np.max(np.abs(noarb_strategy(scen, "x", "y", variant, True, 3.0))) == 0.0
    assert np.all(noarb_strategy(scen, "x", "x") == 0.0)
    with pytest.raises(ValueError):
        noarb_strategy(scen, "x", "y", "fixed-horizon")
    with pytest.raises(ValueError):
        noarb_strategy(scen, "x", "y", "overnight")


def test_unadjusted_strategy_sign_follows_kernel_ordering():
    scen = simulate(models.rational(restricted=False), models.GRID, 5000, 17, maturities=[])
    value = noarb_strategy(scen, "x", "y")
    order = np.sign(scen.h["x"] - scen.h["y"])
    assert np.all(np.sign(value) == order)
    assert np.max(np.abs(noarb_strategy(scen, "x", "y", adjusted=True))) < 1e-12


def test_measure_consistency_exact_on_deterministic_models():
    report = measure_consistency(models.deterministic(), "x", "y", FraSpec(1.0, 1.5, strike_y=0.02))
    values = list(report.estimates.values())
    assert report.passed and not report.skipped
    assert max(values) - min(values) < 1e-12
    assert values[0] == pytest.approx(report.closed_form, abs=1e-12)


def test_measure_consistency_same_market_routes():
    econ = models.hjm()
    report = measure_consistency(econ, "x", "x", FraSpec(1.0, 1.5, strike_y=0.03), n_paths=50_000, seed=3)
    assert report.passed
    assert abs(report.estimates["kernel"] - report.closed_form) < 3.5 * report.std_errors["kernel"]


def test_measure_consistency_skips_models_without_factorisation():
    report = measure_consistency(models.rational(), "x", "y", FraSpec(1.0, 1.5))
    assert report.skipped and report.passed and report.reason


def test_domination_check_finds_the_long_dated_counterexample():
    econ = economy_from_curves([Curve.flat(0.05, "x"), Curve.flat(0.06, "y")])
    scen = simulate(econ, [0.0, 1.0], 10, 1, maturities=[1.0, 2.0, 18.0, 19.0])
    short = domination_check(scen, "x", "y", 1.0, 2.0)
    assert short["passed"] and short["states_checked"] == 20
    long = domination_check(scen, "x", "y", 18.0, 19.0)
    assert not long["passed"] and long["violations"] == 20 and long["worst_gap"] < 0.0


def test_domination_check_skips_without_premise():
    econ = economy_from_curves([Curve.flat(0.06, "x"), Curve.flat(0.05, "y")])
    scen = simulate(econ, [0.0, 1.0], 10, 1, maturities=[1.0, 2.0])
    report = domination_check(scen, "x", "y", 1.0, 2.0)
    assert report["skipped"] and report["worst_gap"] is None
