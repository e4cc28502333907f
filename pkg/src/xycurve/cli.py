"""Command-line entry point: ``xycurve bootstrap|price|simulate|diagnose``.

Exit codes: 0 success, 1 a check failed, 2 unreadable or invalid input,
3 bootstrap infeasible, 4 convention mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import instruments as ins
from .bootstrap import BootstrapError, bootstrap
from .config import economy_from_curves, load_curve, load_economy
from .instruments import ConventionError
from .mc import ScenarioSet, domination_check, martingale_test, measure_consistency, noarb_strategy, simulate
from .term import Curve, QuoteSet, Schedule

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BOOTSTRAP, EXIT_CONVENTION = 0, 1, 2, 3, 4
TESTS = ("martingale", "noarb", "measure", "domination")


def write_json(path, data) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# bootstrap


def cmd_bootstrap(args) -> int:
    discount = load_curve({"path": args.discount}) if args.discount else None
    quotes = QuoteSet.from_csv(args.quotes, args.market, args.discount)
    result = bootstrap(quotes, args.mode, discount)
    curve = result.curve if not args.label else result.curve.with_label(args.label)
    curve.save(args.out)
    print(f"{'type':<5} {'start':>8} {'end':>8} {'quote':>14} {'repriced':>14} {'error':>10}")
    for r in result.residuals:
        print(f"{r['type']:<5} {r['start']:>8.4f} {r['end']:>8.4f} {r['quote']:>14.10f} "
              f"{r['repriced']:>14.10f} {r['error']:>10.2e}")
    if args.report:
        write_json(args.report, {"mode": result.mode, "market": quotes.market, "max_residual": result.max_residual,
                                 "ok": result.ok, "residuals": result.residuals, "curve": curve.to_dict()})
    return EXIT_OK if result.ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# price


def _schedule(spec) -> Schedule:
    if "resets" in spec:
        return Schedule(tuple(float(t) for t in spec["resets"]))
    return Schedule.regular(float(spec.get("start", 0.0)), float(spec["end"]), float(spec["step"]))


def _pricing_economy(args, spec):
    """Economy for pricing: a model file or deterministic curves from flags."""
    if args.model:
        return load_economy(args.model)
    curves = []
    if args.curve:
        curves.append(load_curve({"path": args.curve}, label=spec.get("forecast", "y")))
    if args.discount:
        curves.append(load_curve({"path": args.discount}, label=spec.get("discount", "x")))
    if not curves:
        raise ConventionError("pricing needs --model or at least one curve")
    return economy_from_curves(curves)


def _market(econ, label, role):
    if label not in econ.markets:
        raise ConventionError(f"{role} market {label!r} is not available; have {econ.labels}")
    return econ[label]


def price_instrument(econ, spec: dict, state=None, t: float = 0.0) -> dict:
    kind = spec.get("kind")
    state = econ.initial_state() if state is None else np.asarray(state, dtype=float)
    fc, dc = spec.get("forecast", "y"), spec.get("discount", "x")
    if kind == "fra":
        my = _market(econ, fc, "forecast")
        fra = ins.FraSpec(float(spec["reset"]), float(spec["pay"]), strike_y=float(spec.get("strike", 0.0)))
        res = ins.fra_em_value(my, state, t, fra)
    elif kind == "irs":
        my = _market(econ, fc, "forecast")
        res = ins.irs_em_value(my, state, t, ins.SwapSpec(_schedule(spec), float(spec.get("fixed_rate", 0.0))))
    elif kind == "fra_dm":
        mx, my = _market(econ, dc, "discount"), _market(econ, fc, "forecast")
        fra = ins.FraSpec(float(spec["reset"]), float(spec["pay"]), strike_y=spec.get("strike_y"),
                          strike_x=spec.get("strike_x"))
        res = ins.fra_dm_value(mx, my, state, t, fra)
    elif kind == "irs_dm":
        mx, my = _market(econ, dc, "discount"), _market(econ, fc, "forecast")
        swap = ins.SwapSpec(_schedule(spec), float(spec.get("fixed_rate", 0.0)), spec.get("rate_market", "x"))
        res = ins.irs_dm_value(mx, my, state, t, swap)
    elif kind == "fx_fwd":
        fx = ins.FxSpec(_market(econ, spec["domestic"], "domestic"), _market(econ, spec["foreign"], "foreign"),
                        float(spec["spot"]))
        res = ins.fx_forward(fx, state, t, float(spec["maturity"]), spec.get("strike"))
    elif kind == "il_bond":
        mn, mr = _market(econ, spec["nominal"], "nominal"), _market(econ, spec["real"], "real")
        value = float(spec.get("base_index", 1.0)) * np.asarray(
            ins.inflation_bond(mn, mr, state, t, float(spec["maturity"])))
        res = ins.PriceResult(value, None, {"quanto_bond": value})
    elif kind == "fx_libor":
        res = ins.fx_libor_forward(_market(econ, spec["domestic_discount"], "domestic discount"),
                                   _market(econ, spec["foreign_discount"], "foreign discount"),
                                   _market(econ, spec["foreign_forecast"], "foreign forecast"),
                                   float(spec["spot"]), state, t, float(spec["reset"]), float(spec["pay"]),
                                   spec.get("strike"))
    elif kind == "il_fx":
        res = ins.inflation_fx_forward(_market(econ, spec["domestic_nominal"], "domestic nominal"),
                                       _market(econ, spec["foreign_real"], "foreign real"),
                                       _market(econ, spec["foreign_nominal"], "foreign nominal"),
                                       float(spec["spot"]), state, t, float(spec["maturity"]), spec.get("strike"))
    else:
        raise ValueError(f"unknown instrument kind {kind!r}")
    out = res.to_dict()
    out["kind"] = kind
    return out


def cmd_price(args) -> int:
    spec = json.loads(Path(args.instrument).read_text())
    if spec.get("kind") in ("fra_dm", "irs_dm") and not args.model and not args.discount:
        raise ConventionError("developed-market instruments need a discount curve or a model with both markets")
    econ = _pricing_economy(args, spec)
    write_json(args.out, price_instrument(econ, spec))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / diagnose


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()] if text else None


def resolved_config(econ) -> dict:
    """Model config with every curve inlined, so a scenario is self-contained."""
    cfg = json.loads(json.dumps(econ.config))
    markets = cfg.get("markets") or [{"label": cfg.get("label"), "params": cfg.get("params", {})}]
    for m in markets:
        model = econ[m["label"]]
        if "curve" in m.get("params", {}) and hasattr(model, "curve"):
            m["params"]["curve"] = model.curve.to_dict()
    cfg["markets"] = markets
    cfg.pop("label", None)
    cfg.pop("params", None)
    return cfg


def cmd_simulate(args) -> int:
    econ = load_economy(args.model)
    if args.dt <= 0.0 or args.horizon <= 0.0 or args.observe < 2:
        raise ValueError("need dt > 0, horizon > 0 and at least two observation intervals")
    if econ.driver.max_dt is not None:
        econ.driver.max_dt = min(econ.driver.max_dt, args.dt)
    times = np.linspace(0.0, args.horizon, args.observe + 1)
    maturities = _floats(args.maturities) or times[1:]
    econ.config = resolved_config(econ)
    scen = simulate(econ, times, args.paths, args.seed, maturities=maturities)
    scen.save(args.out)
    if args.csv:
        scen.to_csv(args.csv)
    print(f"{scen.n_paths} paths, {times.size} slices, {int(scen.aborted.sum())} aborted -> {args.out}")
    return EXIT_OK


def _pairs(labels):
    if len(labels) == 1:
        return [(labels[0], labels[0])]
    return [(x, y) for x in labels for y in labels if x != y]


def run_diagnostics(scen: ScenarioSet, tests, threshold: float = 3.5) -> dict:
    econ = scen.economy or load_economy(scen.config)
    mats = [float(T) for T in scen.maturities]
    periods = list(zip(mats[:-1], mats[1:]))
    cfg = scen.config or {}
    report = {"seed": scen.seed, "n_paths": scen.n_paths, "aborted": int(scen.aborted.sum()),
              "labels": scen.labels, "results": {}}
    passed = True
    if "martingale" in tests:
        rows = []
        for label in scen.labels:
            for T in mats:
                rows.append(martingale_test(scen, ("hP", label, T), threshold).to_dict())
        for x, y in _pairs(scen.labels):
            for tp, tn in periods:
                rows.append(martingale_test(scen, ("hPL", x, y, tp, tn), threshold).to_dict())
                if cfg.get("model_ii"):
                    rows.append(martingale_test(scen, ("hPv", x, y, tp, tn), threshold).to_dict())
        ok = all(r["passed"] for r in rows)
        report["results"]["martingale"] = {"passed": ok, "tests": rows}
        passed &= ok
    if "noarb" in tests:
        rows = []
        for x, y in _pairs(scen.labels):
            variants = [("money-market", None)] + [("fixed-horizon", T) for T in mats]
            for variant, T in variants:
                adj = noarb_strategy(scen, x, y, variant, True, T)[scen.live]
                raw = noarb_strategy(scen, x, y, variant, False, T)[scen.live]
                finite = np.isfinite(raw)
                rows.append({"x": x, "y": y, "variant": variant, "maturity": T,
                             "max_abs_adjusted": float(np.nanmax(np.abs(adj))),
                             "unadjusted_mean": float(raw[finite].mean()),
                             "unadjusted_positive_fraction": float((raw[finite] > 0).mean()),
                             "passed": bool(np.nanmax(np.abs(adj)) <= 1e-12)})
        ok = all(r["passed"] for r in rows)
        report["results"]["noarb"] = {"passed": ok, "tests": rows}
        passed &= ok
    if "measure" in tests and periods:
        x, y = _pairs(scen.labels)[0]
        tp, tn = periods[0]
        fra = ins.FraSpec(tp, tn, strike_y=float(cfg.get("measure_strike", 0.0)))
        res = measure_consistency(econ, x, y, fra, scen.n_paths, scen.seed, threshold).to_dict()
        res.update({"x": x, "y": y, "reset": tp, "pay": tn})
        report["results"]["measure"] = res
        passed &= res["passed"]
    if "domination" in tests and periods:
        rows = []
        for x, y in _pairs(scen.labels):
            tp, tn = periods[-1]
            res = domination_check(scen, x, y, tp, tn)
            res.update({"x": x, "y": y, "t_prev": tp, "t_next": tn})
            rows.append(res)
        ok = all(r["passed"] for r in rows)
        report["results"]["domination"] = {"passed": ok, "tests": rows}
        passed &= ok
    report["passed"] = bool(passed)
    return report


def cmd_diagnose(args) -> int:
    if not Path(args.scenario).exists():
        raise FileNotFoundError(f"scenario file {args.scenario} not found")
    scen = ScenarioSet.load(args.scenario)
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    unknown = sorted(set(tests) - set(TESTS))
    if unknown:
        raise ValueError(f"unknown tests {unknown}; choose from {TESTS}")
    report = run_diagnostics(scen, tests, args.threshold)
    write_json(args.report, report)
    for name, res in report["results"].items():
        print(f"{name:<11} {'PASS' if res['passed'] else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xycurve", description="Multi-curve kernel pricing toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bootstrap", help="build a discount curve from quotes")
    p.add_argument("--quotes", required=True)
    p.add_argument("--mode", required=True, choices=["emerging", "developed", "practitioner"])
    p.add_argument("--discount", help="x-market curve JSON (developed mode)")
    p.add_argument("--market", help="market to bootstrap when the file has several")
    p.add_argument("--label", help="label for the output curve")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("price", help="price an instrument")
    p.add_argument("--instrument", required=True)
    p.add_argument("--model", help="model JSON")
    p.add_argument("--curve", help="forecast curve JSON when no model is given")
    p.add_argument("--discount", help="discount curve JSON when no model is given")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("simulate", help="generate a scenario file")
    p.add_argument("--model", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.004, help="largest step for discretised drivers")
    p.add_argument("--observe", type=int, default=4, help="number of stored observation intervals")
    p.add_argument("--maturities", help="comma-separated bond maturities to store")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="run diagnostics on a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tests", default=",".join(TESTS))
    p.add_argument("--threshold", type=float, default=3.5)
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except BootstrapError as exc:
        quote = f" [quote {exc.quote}]" if exc.quote else ""
        print(f"bootstrap failed: {exc}{quote}", file=sys.stderr)
        return EXIT_BOOTSTRAP
    except ConventionError as exc:
        print(f"convention error: {exc}", file=sys.stderr)
        return EXIT_CONVENTION
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
