"""Initial discount curves from deposit, FRA and swap quotes.

Three conventions:

``emerging``
    one curve forecasts and discounts; the classical recursion.
``developed``
    quotes are multi-curve fair rates discounted on a given x-curve; the
    recursion yields the y-curve ``P^y_{0t}``, which equals the quanto curve
    ``P^{xy}_{0t}`` at time zero.
``practitioner``
    the single-curve recursion applied to developed-market quotes. The result
    mixes forecasting and discounting effects and is provided for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .instruments import ConventionError, FraSpec, SwapSpec, fra_dm_value, fra_em_value, irs_dm_value, irs_em_value
from .kernels import deterministic_economy
from .term import Curve, QuoteSet, Schedule

RESIDUAL_TOL = 1e-10
_TIME_TOL = 1e-12


class BootstrapError(ValueError):
    """A quote cannot be matched by a positive discount factor."""

    def __init__(self, message: str, quote: tuple | None = None):
        super().__init__(message)
        self.quote = quote


@dataclass
class BootstrapResult:
    curve: Curve
    residuals: list = field(default_factory=list)
    mode: str = ""

    @property
    def max_residual(self) -> float:
        return max((abs(r["error"]) for r in self.residuals), default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_residual < RESIDUAL_TOL


def _describe(quote) -> str:
    kind, start, end, q = quote
    return f"{kind} ({start}, {end}) quote {q}"


def _curve(label, pillars) -> Curve:
    return Curve.from_pillars(label, pillars)


def _swap_schedule(quotes: QuoteSet, maturity: float, quote) -> Schedule:
    try:
        return Schedule.regular(0.0, maturity, quotes.accrual_step)
    except ValueError as exc:
        raise BootstrapError(f"{_describe(quote)}: {exc}", quote) from exc


def _positive(df: float, quote) -> float:
    if not np.isfinite(df) or df <= 0.0:
        raise BootstrapError(f"{_describe(quote)} implies a non-positive discount factor ({df:.6g})", quote)
    return float(df)


def _df_at(pillars, t) -> float:
    if t <= _TIME_TOL:
        return 1.0
    if t > pillars[-1][0] + _TIME_TOL:
        raise ValueError("time beyond the bootstrapped region")
    return _curve("tmp", pillars).df(t)


def _single_curve(quotes: QuoteSet, mode: str) -> BootstrapResult:
    rows = list(quotes.iter_quotes())
    tenor, rate = quotes.deposit
    pillars = [(tenor, _positive(1.0 / (1.0 + rate * tenor), rows[0]))]
    for quote in rows[1:]:
        kind, start, end, q = quote
        if kind == "FRA":
            if start > pillars[-1][0] + _TIME_TOL:
                raise BootstrapError(f"{_describe(quote)} starts beyond the curve built so far", quote)
            p_start = _df_at(pillars, start)
            pillars.append((end, _positive(p_start / (1.0 + q * (end - start)), quote)))
        else:
            pillars.append((end, _solve_swap(quotes, pillars, end, q, quote)))
    curve = _curve(quotes.market, pillars)
    residuals = []
    for quote in rows:
        kind, start, end, q = quote
        if kind == "IRS":
            fair = irs_em_value(curve, None, 0.0, SwapSpec(_swap_schedule(quotes, end, quote))).fair_rate
        else:
            fair = fra_em_value(curve, None, 0.0, FraSpec(start, end, strike_y=q)).fair_rate
        residuals.append({"type": kind, "start": start, "end": end, "quote": q,
                          "repriced": float(fair), "error": float(fair - q)})
    return BootstrapResult(curve, residuals, mode)


def _solve_swap(quotes: QuoteSet, pillars, maturity, rate, quote) -> float:
    """Terminal df that reprices a swap, filling any gap log-linearly."""
    schedule = _swap_schedule(quotes, maturity, quote)
    times = np.asarray(schedule.payment_times)
    deltas = schedule.accruals
    last = pillars[-1][0]
    known = times < last + _TIME_TOL
    gap = (~known) & (times < maturity - _TIME_TOL)
    if not gap.any():
        annuity = sum(d * _df_at(pillars, u) for d, u in zip(deltas[known], times[known]))
        return _positive((1.0 - rate * annuity) / (1.0 + deltas[-1] * rate), quote)

    def mismatch(x):
        curve = _curve("tmp", pillars + [(maturity, x)])
        dfs = curve.df(times)
        return (1.0 - dfs[-1]) - rate * float(np.dot(deltas, dfs))

    hi = 10.0 * pillars[-1][1]
    lo = 1e-12 * pillars[-1][1]
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo * f_hi > 0.0:
        raise BootstrapError(f"{_describe(quote)} cannot be matched by a positive discount factor", quote)
    x = brentq(mismatch, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _positive(x, quote)


def bootstrap_emerging(quotes: QuoteSet) -> BootstrapResult:
    """Single-curve recursion; the quotes both forecast and discount."""
    if quotes.discount_curve_ref:
        raise ConventionError("emerging-market bootstrap takes no discount curve")
    return _single_curve(quotes, "emerging")


def bootstrap_practitioner(quotes: QuoteSet) -> BootstrapResult:
    """Single-curve recursion applied to multi-curve quotes."""
    return _single_curve(quotes, "practitioner")


def bootstrap_developed(quotes: QuoteSet, discount_curve: Curve) -> BootstrapResult:
    """y-curve from multi-curve quotes given the x (discounting) curve."""
    if discount_curve is None:
        raise ConventionError("developed-market bootstrap needs a discount curve")
    rows = list(quotes.iter_quotes())
    horizon = rows[-1][2]
    if discount_curve.times[-1] < horizon - _TIME_TOL:
        raise ConventionError(
            f"discount curve {discount_curve.label!r} ends at {discount_curve.times[-1]}, "
            f"before the last quote maturity {horizon}")
    px = discount_curve.df
    tenor, rate = quotes.deposit
    pillars = [(tenor, _positive(1.0 - tenor * px(tenor) * rate, rows[0]))]
    for quote in rows[1:]:
        kind, start, end, q = quote
        if kind == "FRA":
            if start > pillars[-1][0] + _TIME_TOL:
                raise BootstrapError(f"{_describe(quote)} starts beyond the curve built so far", quote)
            df = _df_at(pillars, start) - (end - start) * px(end) * q
        else:
            schedule = _swap_schedule(quotes, end, quote)
            annuity = float(np.dot(schedule.accruals, px(np.asarray(schedule.payment_times))))
            df = 1.0 - q * annuity
        pillars.append((end, _positive(df, quote)))
    curve = _curve(quotes.market, pillars)

    x_label = discount_curve.label or "x"
    y_label = quotes.market if quotes.market != x_label else quotes.market + "_fwd"
    econ = deterministic_economy([discount_curve.with_label(x_label), curve.with_label(y_label)])
    mx, my = econ[x_label], econ[y_label]
    state = econ.initial_state()
    residuals = []
    for quote in rows:
        kind, start, end, q = quote
        if kind == "IRS":
            swap = SwapSpec(_swap_schedule(quotes, end, quote), 0.0, "x")
            fair = irs_dm_value(mx, my, state, 0.0, swap).fair_rate
        else:
            fair = fra_dm_value(mx, my, state, 0.0, FraSpec(start, end, strike_x=0.0)).fair_rate
        residuals.append({"type": kind, "start": start, "end": end, "quote": q,
                          "repriced": float(fair), "error": float(fair - q)})
    return BootstrapResult(curve, residuals, "developed")


def bootstrap(quotes: QuoteSet, mode: str, discount_curve: Curve | None = None) -> BootstrapResult:
    if mode == "emerging":
        if discount_curve is not None:
            raise ConventionError("emerging-market bootstrap takes no discount curve")
        return bootstrap_emerging(quotes)
    if mode == "practitioner":
        return bootstrap_practitioner(quotes)
    if mode == "developed":
        return bootstrap_developed(quotes, discount_curve)
    raise ValueError(f"unknown bootstrap mode {mode!r}")
