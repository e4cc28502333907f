"""FRA, swap, FX and inflation pricers in single-curve and multi-curve form.

Emerging-market (``em``) pricers forecast and discount on one curve.
Developed-market (``dm``) pricers forecast on a y-curve and discount on an
x-curve, converting between the two with ``Q^{xy}``. Wherever two closed
forms exist for the same price, both are computed and must agree to 1e-12.

Pricers take either a :class:`~xycurve.term.Curve` (valuation at ``t = 0``
or with deterministic roll-down) or a kernel model plus a state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conversion import check_agreement, q_forward, q_spot, quanto_bond
from .kernels import KernelModel, _out
from .term import Curve, Schedule


class ConventionError(ValueError):
    """Inputs that do not fit the requested market convention."""


@dataclass
class PriceResult:
    value: object
    fair_rate: object = None
    representations: dict = field(default_factory=dict)
    gap: float = 0.0

    def to_dict(self) -> dict:
        def conv(v):
            v = np.asarray(v)
            return float(v) if v.ndim == 0 else v.tolist()

        out = {"value": conv(self.value), "gap": float(self.gap),
               "representations": {k: conv(v) for k, v in self.representations.items()}}
        if self.fair_rate is not None:
            out["fair_rate"] = conv(self.fair_rate)
        return out


@dataclass(frozen=True)
class FraSpec:
    """One accrual period ``[reset, pay]``.

    Strikes may be quoted in the forecast market (``strike_y``), the discount
    market (``strike_x``) or both; when both are given they must be related
    by the conversion factor at valuation.
    """

    reset: float
    pay: float
    strike_y: float | None = None
    strike_x: float | None = None
    forecast: str = "y"
    discount: str = "x"

    def __post_init__(self):
        if not self.pay > self.reset >= 0.0:
            raise ValueError(f"FRA needs 0 <= reset < pay, got ({self.reset}, {self.pay})")

    @property
    def accrual(self) -> float:
        return self.pay - self.reset


@dataclass(frozen=True)
class SwapSpec:
    """Fixed-for-floating swap; the fixed rate is quoted in ``rate_market``."""

    schedule: Schedule
    fixed_rate: float = 0.0
    rate_market: str = "y"
    forecast: str = "y"
    discount: str = "x"

    def __post_init__(self):
        if len(self.schedule) < 1:
            raise ValueError("empty swap schedule")
        if self.rate_market not in ("x", "y"):
            raise ValueError("rate_market must be 'x' or 'y'")


def _bond(source, state, t, T):
    if isinstance(source, Curve):
        if t > T:
            raise ValueError(f"bond valuation time {t} is after maturity {T}")
        return source.df(T) / source.df(t)
    return source.conditional_bond(state, t, T)


def _max_abs(x) -> float:
    return float(np.max(np.abs(np.asarray(x, dtype=float)), initial=0.0))


# ---------------------------------------------------------------------------
# single-curve


def fra_em_value(source_y, state, t, fra: FraSpec, fixing=None) -> PriceResult:
    """FRA valued and forecast on one curve.

    After the reset the floating rate is known and must be passed as
    ``fixing``; the remaining cash flow is discounted to the payment date.
    """
    strike = fra.strike_y if fra.strike_y is not None else (fra.strike_x or 0.0)
    if fra.strike_y is not None and fra.strike_x is not None and fra.strike_x != fra.strike_y:
        raise ConventionError("a single-curve FRA has one strike")
    d = fra.accrual
    if t > fra.reset:
        if fixing is None:
            raise ValueError("valuation after reset needs the fixed rate")
        value = _bond(source_y, state, t, fra.pay) * d * (np.asarray(fixing) - strike)
        return PriceResult(_out(value), _out(fixing), {"post_reset": _out(value)})
    p_prev = np.asarray(_bond(source_y, state, t, fra.reset))
    p_next = np.asarray(_bond(source_y, state, t, fra.pay))
    value = p_prev - (1.0 + d * strike) * p_next
    fair = (p_prev / p_next - 1.0) / d
    alt = d * p_next * (fair - strike)
    gap = check_agreement(value, alt, "single-curve FRA")
    return PriceResult(_out(value), _out(fair), {"bonds": _out(value), "forward": _out(alt)}, gap)


def irs_em_value(source_y, state, t, swap: SwapSpec) -> PriceResult:
    times = swap.schedule.reset_times
    if t > times[0]:
        raise ValueError("swap valuation must precede the first reset")
    deltas = swap.schedule.accruals
    bonds = [np.asarray(_bond(source_y, state, t, u)) for u in times]
    annuity = sum(d * p for d, p in zip(deltas, bonds[1:]))
    value = bonds[0] - bonds[-1] - swap.fixed_rate * annuity
    fair = (bonds[0] - bonds[-1]) / annuity
    strip = sum(d * p * ((a / p - 1.0) / d - swap.fixed_rate)
                for d, a, p in zip(deltas, bonds[:-1], bonds[1:]))
    gap = check_agreement(value, strip, "single-curve swap")
    return PriceResult(_out(value), _out(fair), {"bonds": _out(value), "fra_strip": _out(strip)}, gap)


# ---------------------------------------------------------------------------
# multi-curve


def ibor_xy(model_x: KernelModel, model_y: KernelModel, state, t, t_prev, t_next):
    """Converted forward rate ``L^{xy}_t = Q^{xy}_{t,t_next} L^y_t``."""
    if not t <= t_prev < t_next:
        raise ValueError(f"need t <= t_prev < t_next, got ({t}, {t_prev}, {t_next})")
    d = t_next - t_prev
    py_prev = np.asarray(model_y.conditional_bond(state, t, t_prev))
    py_next = np.asarray(model_y.conditional_bond(state, t, t_next))
    l_y = (py_prev / py_next - 1.0) / d
    direct = np.asarray(q_forward(model_x, model_y, state, t, t_next)) * l_y
    pxy_prev = np.asarray(quanto_bond(model_x, model_y, state, t, t_prev))
    pxy_next = np.asarray(quanto_bond(model_x, model_y, state, t, t_next))
    px_next = np.asarray(model_x.conditional_bond(state, t, t_next))
    via_quanto = pxy_next / (d * px_next) * (pxy_prev / pxy_next - 1.0)
    check_agreement(direct, via_quanto, "converted forward rate")
    return _out(direct)


def fcf_xy(model_x, model_y, state, t, t_prev, t_next):
    """Converted capitalisation factor ``1 + delta L^{xy}``."""
    return _out(1.0 + (t_next - t_prev) * np.asarray(ibor_xy(model_x, model_y, state, t, t_prev, t_next)))


def _strikes(fra: FraSpec, q_next):
    """Return ``(K^x, K^y)`` given at least one of them."""
    kx, ky = fra.strike_x, fra.strike_y
    if kx is None and ky is None:
        ky = 0.0
    if ky is None:
        return np.asarray(kx, dtype=float), kx / np.asarray(q_next)
    converted = ky * np.asarray(q_next)
    if kx is not None:
        if _max_abs(converted - kx) > 1e-12:
            raise ConventionError(
                f"strikes K^x={kx} and K^y={ky} are inconsistent with the conversion factor")
    return converted, np.asarray(ky, dtype=float)


def fra_dm_value(model_x: KernelModel, model_y: KernelModel, state, t, fra: FraSpec,
                 fixing=None) -> PriceResult:
    """Developed-market FRA: forecast on y, collateral and discounting on x.

    Before the reset the value is computed both as ``delta P^x (L^{xy} - K^x)``
    and as a difference of quanto bonds. After the reset, ``fixing`` is the
    pair ``(L^y, Q^{xy})`` frozen at the reset date.
    """
    d = fra.accrual
    if t > fra.reset:
        if fixing is None:
            raise ValueError("valuation after reset needs the frozen (rate, conversion factor)")
        l_fixed, q_fixed = fixing
        ky = fra.strike_y if fra.strike_y is not None else fra.strike_x / q_fixed
        value = np.asarray(model_x.conditional_bond(state, t, fra.pay)) * q_fixed * d * (l_fixed - ky)
        return PriceResult(_out(value), None, {"post_reset": _out(value)})
    q_next = np.asarray(q_forward(model_x, model_y, state, t, fra.pay))
    kx, ky = _strikes(fra, q_next)
    l_xy = np.asarray(ibor_xy(model_x, model_y, state, t, fra.reset, fra.pay))
    px_next = np.asarray(model_x.conditional_bond(state, t, fra.pay))
    theorem = d * px_next * (l_xy - kx)
    pxy_prev = np.asarray(quanto_bond(model_x, model_y, state, t, fra.reset))
    pxy_next = np.asarray(quanto_bond(model_x, model_y, state, t, fra.pay))
    telescoped = pxy_prev - (1.0 + d * ky) * pxy_next
    gap = check_agreement(theorem, telescoped, "developed-market FRA")
    return PriceResult(_out(theorem), _out(l_xy),
                       {"converted_rate": _out(theorem), "quanto_bonds": _out(telescoped)}, gap)


def irs_dm_value(model_x: KernelModel, model_y: KernelModel, state, t, swap: SwapSpec) -> PriceResult:
    """Developed-market swap. ``representations`` also carries ``S^y`` and ``S^x``."""
    times = swap.schedule.reset_times
    if t > times[0]:
        raise ValueError("swap valuation must precede the first reset")
    deltas = swap.schedule.accruals
    px = [np.asarray(model_x.conditional_bond(state, t, u)) for u in times[1:]]
    q = [np.asarray(q_forward(model_x, model_y, state, t, u)) for u in times[1:]]
    annuity_x = sum(d * p for d, p in zip(deltas, px))
    annuity_xy = sum(d * p * qi for d, p, qi in zip(deltas, px, q))
    if swap.rate_market == "x":
        s_x = np.asarray(swap.fixed_rate, dtype=float)
        s_y = s_x * annuity_x / annuity_xy
    else:
        s_y = np.asarray(swap.fixed_rate, dtype=float)
        s_x = s_y * annuity_xy / annuity_x
    strip = sum(d * p * (np.asarray(ibor_xy(model_x, model_y, state, t, a, b)) - s_x)
                for d, p, a, b in zip(deltas, px, times[:-1], times[1:]))
    pxy_first = np.asarray(quanto_bond(model_x, model_y, state, t, times[0]))
    pxy_last = np.asarray(quanto_bond(model_x, model_y, state, t, times[-1]))
    telescoped = pxy_first - pxy_last - s_y * annuity_xy
    gap = check_agreement(strip, telescoped, "developed-market swap")
    fair_x = (pxy_first - pxy_last) / annuity_x
    fair_y = (pxy_first - pxy_last) / annuity_xy
    return PriceResult(_out(strip), _out(fair_x),
                       {"converted_rates": _out(strip), "quanto_bonds": _out(telescoped),
                        "fair_rate_y": _out(fair_y), "fixed_rate_x": _out(s_x),
                        "fixed_rate_y": _out(s_y)}, gap)


def fra_em_multicurve_value(model_x: KernelModel, model_y: KernelModel, state, t,
                            fra: FraSpec) -> PriceResult:
    """Single-curve style FRA whose bonds are quanto bonds; fair rate is ``L^y``."""
    if t > fra.reset:
        raise ValueError("valuation must precede the reset")
    d = fra.accrual
    ky = fra.strike_y if fra.strike_y is not None else 0.0
    pxy_prev = np.asarray(quanto_bond(model_x, model_y, state, t, fra.reset))
    pxy_next = np.asarray(quanto_bond(model_x, model_y, state, t, fra.pay))
    value = pxy_prev - (1.0 + d * ky) * pxy_next
    py_prev = np.asarray(model_y.conditional_bond(state, t, fra.reset))
    py_next = np.asarray(model_y.conditional_bond(state, t, fra.pay))
    fair = (py_prev / py_next - 1.0) / d
    fair_quanto = (pxy_prev / pxy_next - 1.0) / d
    gap = check_agreement(fair, fair_quanto, "multi-curve forward rate")
    return PriceResult(_out(value), _out(fair), {"quanto_bonds": _out(value)}, gap)


def ns_variant_ibor(model_x: KernelModel, model_y: KernelModel, state, t, t_prev, t_next):
    """Rate ``(Q^{xy}_{t,t_next} v^y - 1) / delta`` and its spread over ``L^x``.

    Returns ``(rate, spread)`` with ``spread = (1 + delta rate) / (1 + delta L^x)``,
    which must equal ``Q^{xy}_{t,t_prev}``.
    """
    if not t <= t_prev < t_next:
        raise ValueError(f"need t <= t_prev < t_next, got ({t}, {t_prev}, {t_next})")
    d = t_next - t_prev
    v_y = (np.asarray(model_y.conditional_bond(state, t, t_prev))
           / np.asarray(model_y.conditional_bond(state, t, t_next)))
    v_x = (np.asarray(model_x.conditional_bond(state, t, t_prev))
           / np.asarray(model_x.conditional_bond(state, t, t_next)))
    rate = (np.asarray(q_forward(model_x, model_y, state, t, t_next)) * v_y - 1.0) / d
    spread = (1.0 + d * rate) / v_x
    check_agreement(spread, q_forward(model_x, model_y, state, t, t_prev), "rate spread identity")
    return _out(rate), _out(spread)


# ---------------------------------------------------------------------------
# inflation and FX


@dataclass(frozen=True)
class InflationSpec:
    nominal: KernelModel
    real: KernelModel
    base_index: float = 1.0

    def __post_init__(self):
        if self.base_index <= 0.0:
            raise ValueError("base index must be positive")


def cpi(spec: InflationSpec, state, t):
    """Index level ``C_0 h^R_t / h^N_t``."""
    return _out(spec.base_index * np.asarray(q_spot(spec.nominal, spec.real, state, t)))


def inflation_bond(model_n: KernelModel, model_r: KernelModel, state, t, T):
    """Nominal value of one unit of index-linked cash at ``T`` (per unit of the base index)."""
    return quanto_bond(model_n, model_r, state, t, T)


@dataclass(frozen=True)
class FxSpec:
    """Spot ``X^{ij}_0``: units of currency ``i`` per unit of currency ``j``."""

    domestic: KernelModel
    foreign: KernelModel
    spot: float

    def __post_init__(self):
        if self.spot <= 0.0:
            raise ValueError("spot FX rate must be positive")

    def spot_at(self, state, t):
        return _out(self.spot * np.asarray(q_spot(self.domestic, self.foreign, state, t)))


def fx_forward(fx: FxSpec, state, t, T, strike=None) -> PriceResult:
    """Fair forward FX rate and, given a strike, the forward contract value.

    The contract pays ``(X_T - K) / X_0`` units of domestic currency at ``T``.
    """
    q = np.asarray(q_forward(fx.domestic, fx.foreign, state, t, T))
    conversion = fx.spot * q
    parity = (np.asarray(fx.spot_at(state, t)) * np.asarray(fx.foreign.conditional_bond(state, t, T))
              / np.asarray(fx.domestic.conditional_bond(state, t, T)))
    gap = check_agreement(conversion, parity, "forward FX rate")
    reps = {"conversion_factor": _out(conversion), "interest_parity": _out(parity)}
    value = None
    if strike is not None:
        p_i = np.asarray(fx.domestic.conditional_bond(state, t, T))
        value = np.asarray(quanto_bond(fx.domestic, fx.foreign, state, t, T)) - strike / fx.spot * p_i
        value = _out(value)
    return PriceResult(value, _out(conversion), reps, gap)


def fx_triangle_gap(fx_ij: FxSpec, fx_jk: FxSpec, fx_ik: FxSpec, state, t, T) -> float:
    """Largest deviation of ``F^{ik}`` from ``F^{ij} F^{jk}``; spots must be consistent."""
    if abs(fx_ik.spot - fx_ij.spot * fx_jk.spot) > 1e-12 * fx_ik.spot:
        raise ValueError("spot rates violate the triangle")
    f_ij = np.asarray(fx_forward(fx_ij, state, t, T).fair_rate)
    f_jk = np.asarray(fx_forward(fx_jk, state, t, T).fair_rate)
    f_ik = np.asarray(fx_forward(fx_ik, state, t, T).fair_rate)
    return _max_abs(f_ik - f_ij * f_jk)


def fx_libor_forward(model_x_dom: KernelModel, model_x_for: KernelModel, model_y_for: KernelModel,
                     fx_spot: float, state, t, t_prev, t_next, strike=None) -> PriceResult:
    """Domestic-collateralised forward on a foreign IBOR tenor.

    The fair rate is found as the FX-converted foreign multi-curve rate and
    directly as ``L^{x_dom, y_for}``. ``fx_spot`` only scales the FX forward and
    cancels; it is kept to mirror the quoting convention.
    """
    fx = FxSpec(model_x_dom, model_x_for, fx_spot)
    f_fx = np.asarray(fx_forward(fx, state, t, t_next).fair_rate)
    foreign = np.asarray(ibor_xy(model_x_for, model_y_for, state, t, t_prev, t_next))
    via_fx = f_fx / fx_spot * foreign
    direct = np.asarray(ibor_xy(model_x_dom, model_y_for, state, t, t_prev, t_next))
    gap = check_agreement(via_fx, direct, "FX-converted forward rate")
    value = None
    if strike is not None:
        p = np.asarray(model_x_dom.conditional_bond(state, t, t_next))
        value = _out((t_next - t_prev) * p * (direct - strike))
    return PriceResult(value, _out(direct), {"via_fx": _out(via_fx), "direct": _out(direct)}, gap)


def inflation_fx_forward(model_n_dom: KernelModel, model_r_for: KernelModel, model_n_for: KernelModel,
                         fx_spot: float, state, t, T, strike=None) -> PriceResult:
    """Forward on the foreign real (index-linked) unit, paid in domestic nominal currency.

    Asserts the conversion-factor chain between domestic nominal, foreign
    nominal and foreign real kernels.
    """
    q_direct = np.asarray(q_forward(model_n_dom, model_r_for, state, t, T))
    q_chain = (np.asarray(q_forward(model_n_dom, model_n_for, state, t, T))
               * np.asarray(q_forward(model_n_for, model_r_for, state, t, T)))
    gap = check_agreement(q_direct, q_chain, "inflation-FX conversion chain")
    fair = fx_spot * q_direct
    f_fx = fx_spot * np.asarray(q_forward(model_n_dom, model_n_for, state, t, T))
    via_bonds = (f_fx * np.asarray(inflation_bond(model_n_for, model_r_for, state, t, T))
                 / np.asarray(model_n_for.conditional_bond(state, t, T)))
    gap = max(gap, check_agreement(fair, via_bonds, "inflation-FX forward"))
    value = None
    if strike is not None:
        p = np.asarray(model_n_dom.conditional_bond(state, t, T))
        value = _out(p * (fair - strike))
    return PriceResult(value, _out(fair), {"conversion_factor": _out(fair), "fx_and_bonds": _out(via_bonds)}, gap)
