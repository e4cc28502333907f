"""Curve-conversion factors and quanto bonds between two markets.

``Q^{xy}_{tT}`` converts a y-market cash flow at ``T`` into x-market terms. It
is the ratio of the two markets' deflated bond values on a common state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import KernelModel, _out, propagate

REPRESENTATION_TOL = 1e-12


class RepresentationMismatch(ArithmeticError):
    """Two algebraically equal formulas disagree beyond tolerance."""


def check_agreement(a, b, what: str, tol: float = REPRESENTATION_TOL) -> float:
    gap = float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))
    if not np.isfinite(gap) or gap > tol * max(1.0, float(np.max(np.abs(a), initial=0.0))):
        raise RepresentationMismatch(f"{what}: representations differ by {gap:.3e}")
    return gap


def q_forward(model_x: KernelModel, model_y: KernelModel, state, t, T):
    """``Q^{xy}_{tT} = h^y_t P^y_{tT} / (h^x_t P^x_{tT})``."""
    if t > T:
        raise ValueError(f"conversion factor needs t <= T, got ({t}, {T})")
    if model_x is model_y:
        return _out(np.ones(np.shape(state)[:-1]))
    num = np.asarray(model_y.deflated_bond(state, t, T))
    den = np.asarray(model_x.deflated_bond(state, t, T))
    return _out(num / den)


def q_spot(model_x: KernelModel, model_y: KernelModel, state, t):
    """``Q^{xy}_{tt} = h^y_t / h^x_t``."""
    if model_x is model_y:
        return _out(np.ones(np.shape(state)[:-1]))
    return _out(np.asarray(model_y.kernel_value(state, t)) / np.asarray(model_x.kernel_value(state, t)))


def quanto_bond(model_x: KernelModel, model_y: KernelModel, state, t, T, check: bool = True):
    """x-market value of one unit of y-currency paid at ``T``.

    Computed as ``P^x_{tT} Q^{xy}_{tT}``; with ``check`` the alternative
    ``Q^{xy}_{tt} P^y_{tT}`` must agree to 1e-12.
    """
    p = np.asarray(model_x.conditional_bond(state, t, T)) * np.asarray(q_forward(model_x, model_y, state, t, T))
    if check:
        alt = np.asarray(q_spot(model_x, model_y, state, t)) * np.asarray(model_y.conditional_bond(state, t, T))
        check_agreement(p, alt, f"quanto bond {model_x.label}{model_y.label}")
    return _out(p)


@dataclass(frozen=True)
class BondLinearFixing:
    """A fixing at ``t`` of the form ``sum_k c_k P^y_{t U_k} / P^y_{tT}``.

    FRA and swap legs fall in this class, and their across-curve value has a
    closed form as a combination of quanto bonds. ``coefficients`` maps
    maturities ``U_k`` to ``c_k``.
    """

    coefficients: tuple[tuple[float, float], ...]

    @classmethod
    def fra(cls, t_prev: float, t_next: float, strike: float) -> "BondLinearFixing":
        """``delta (L^y_{t_prev} - K)`` paid at ``t_next``."""
        return cls(((t_prev, 1.0), (t_next, -(1.0 + (t_next - t_prev) * strike))))

    @classmethod
    def constant(cls, value: float, pay: float) -> "BondLinearFixing":
        return cls(((pay, value),))

    def evaluate(self, model_y: KernelModel, state, t, T):
        total = 0.0
        for u, c in self.coefficients:
            total = total + c * np.asarray(model_y.conditional_bond(state, t, u))
        return _out(total / np.asarray(model_y.conditional_bond(state, t, T)))


def across_curve_price(model_x: KernelModel, model_y: KernelModel, fixing, t: float, T: float,
                       s: float, state, n_paths: int = 100_000, seed: int = 0,
                       fixed_value=None, fixed_q=None):
    """x-market value at ``s`` of a y-market fixing observed at ``t`` and paid at ``T``.

    ``fixing`` is a :class:`BondLinearFixing` (closed form) or a callable of
    the state at ``t`` (Monte Carlo from the single ``state`` at ``s``). For
    ``t <= s <= T`` the fixing and the conversion factor are already known and
    must be supplied as ``fixed_value`` and ``fixed_q``.

    Returns ``(value, standard_error)``.
    """
    if s > T:
        raise ValueError(f"valuation time {s} is after payment {T}")
    if not t <= T:
        raise ValueError("fixing must precede payment")
    if s >= t:
        if s == t and fixed_value is None:
            if isinstance(fixing, BondLinearFixing):
                fixed_value = fixing.evaluate(model_y, state, t, T)
            else:
                fixed_value = fixing(state)
            fixed_q = q_forward(model_x, model_y, state, t, T)
        if fixed_value is None or fixed_q is None:
            raise ValueError("after the fixing, pass the frozen fixing and conversion factor")
        value = np.asarray(model_x.conditional_bond(state, s, T)) * fixed_q * np.asarray(fixed_value)
        return _out(value), 0.0
    if isinstance(fixing, BondLinearFixing):
        total = 0.0
        for u, c in fixing.coefficients:
            total = total + c * np.asarray(quanto_bond(model_x, model_y, state, s, u))
        return _out(total), 0.0
    state = np.asarray(state, dtype=float)
    if state.ndim != 1:
        raise ValueError("the Monte Carlo branch values one state at a time")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 11], dtype=np.uint64)))
    end = propagate(model_x.driver, state, s, t, n_paths, rng)
    vals = (np.asarray(model_y.deflated_bond(end, t, T)) * np.asarray(fixing(end))
            / float(model_x.kernel_value(state, s)))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_paths))


def dual_role_values(model_x: KernelModel, model_y: KernelModel, fixing: Callable, states, t, T):
    """Pathwise integrands of the two across-curve routes.

    Returns ``(h^y_t P^y_{tT} H, h^x_t H^{xy}_{tT})`` where the converted
    payoff is ``H^{xy} = P^x_{tT} Q^{xy}_{tT} H``. Their expectations agree;
    pathwise they are equal up to rounding.
    """
    h = np.asarray(fixing(states))
    via_y = np.asarray(model_y.deflated_bond(states, t, T)) * h
    converted = (np.asarray(model_x.conditional_bond(states, t, T))
                 * np.asarray(q_forward(model_x, model_y, states, t, T)) * h)
    via_x = np.asarray(model_x.kernel_value(states, t)) * converted
    return via_y, via_x
