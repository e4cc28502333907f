"""Pricing-kernel model families.

A model is a positive kernel ``h_t`` together with closed-form conditional
bond prices ``P_{tT} = E[h_T | F_t] / h_t``. Every model reads its state from
a shared *driver*: the stochastic factor vector that all markets in one
economy are functions of. Two markets that load on the same driver
coordinate are dependent; markets on disjoint coordinates are independent.

States are numpy arrays of shape ``(..., driver.state_dim)`` so the same code
prices a single state or a block of simulated paths.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .term import Curve

FD_STEP = 1e-6
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def step_integral(fn: Callable[[float], np.ndarray], t0: float, t1: float) -> np.ndarray:
    """Gauss-Legendre integral of a smooth vector function over ``[t0, t1]``."""
    half = 0.5 * (t1 - t0)
    mid = 0.5 * (t1 + t0)
    vals = np.array([fn(mid + half * x) for x in _GL_NODES])
    return half * np.tensordot(_GL_WEIGHTS, vals, axes=1)


# ---------------------------------------------------------------------------
# deterministic functions of time


@dataclass(frozen=True)
class ExpDecay:
    """``level * exp(-decay * t)``; with ``decay = 0`` a constant."""

    level: float
    decay: float = 0.0

    def __call__(self, t):
        return self.level * np.exp(-self.decay * np.asarray(t, dtype=float))

    def derivative(self, t):
        return -self.decay * self(t)

    def to_dict(self) -> dict:
        return {"level": self.level, "decay": self.decay}

    @classmethod
    def from_config(cls, cfg) -> "ExpDecay":
        if isinstance(cfg, (int, float)):
            return cls(float(cfg), 0.0)
        return cls(float(cfg["level"]), float(cfg.get("decay", 0.0)))


def time_derivative(fn, t):
    """Analytic derivative when ``fn`` provides one, else central differences."""
    if hasattr(fn, "derivative"):
        return fn.derivative(t)
    t = np.asarray(t, dtype=float)
    lo = np.maximum(t - FD_STEP, 0.0)
    hi = t + FD_STEP
    return (np.asarray(fn(hi)) - np.asarray(fn(lo))) / (hi - lo)


def curve_forward(curve, t):
    """Instantaneous forward of an initial discount function."""
    if hasattr(curve, "inst_forward"):
        return curve.inst_forward(t)
    return -time_derivative(lambda s: np.log(curve(s)), t)


# ---------------------------------------------------------------------------
# drivers


class Driver(ABC):
    """Joint factor process shared by the markets of an economy."""

    state_dim: int
    noise_dim: int
    #: largest step the scheme may take; ``None`` means exact over any step
    max_dt: float | None = None

    @abstractmethod
    def initial_state(self) -> np.ndarray: ...

    @abstractmethod
    def evolve(self, state, t: float, dt: float, noise, drift=None) -> np.ndarray:
        """Advance ``state`` from ``t`` to ``t + dt`` with standard normal ``noise``.

        ``drift`` optionally maps time to a vector added to the Brownian
        increments' rate; it is how simulations under other measures are run.
        """

    def substeps(self, t0: float, t1: float) -> int:
        if self.max_dt is None:
            return 1
        return max(1, int(np.ceil((t1 - t0) / self.max_dt - 1e-9)))

    def to_dict(self) -> dict:
        return {}


class BrownianDriver(Driver):
    """Independent standard Brownian motions; the state is ``W_t`` itself."""

    def __init__(self, dim: int):
        if dim < 0:
            raise ValueError("driver dimension must be non-negative")
        self.dim = int(dim)
        self.state_dim = self.dim
        self.noise_dim = self.dim

    def initial_state(self):
        return np.zeros(self.dim)

    def evolve(self, state, t, dt, noise, drift=None):
        out = state + np.sqrt(dt) * noise
        if drift is not None:
            out = out + step_integral(drift, t, t + dt)
        return out

    def to_dict(self):
        return {"dim": self.dim}


def propagate(driver: Driver, state, t0: float, t1: float, n_paths: int, rng,
              drift=None) -> np.ndarray:
    """Simulate ``n_paths`` copies of the driver from a single state."""
    state = np.broadcast_to(np.asarray(state, dtype=float), (n_paths, driver.state_dim)).copy()
    if t1 <= t0:
        return state
    n = driver.substeps(t0, t1)
    dt = (t1 - t0) / n
    t = t0
    for _ in range(n):
        noise = rng.standard_normal((n_paths, driver.noise_dim))
        state = driver.evolve(state, t, dt, noise, drift)
        t += dt
    return state


# ---------------------------------------------------------------------------
# model contract


class KernelModel(ABC):
    """A market's pricing kernel with closed-form conditional bonds."""

    label: str
    driver: Driver

    @abstractmethod
    def kernel_value(self, state, t: float):
        """``h_t`` on the given state(s)."""

    @abstractmethod
    def conditional_bond(self, state, t: float, T: float):
        """``P_{tT}`` on the given state(s)."""

    @abstractmethod
    def initial_discount(self, t):
        """``P_{0t}`` as a function of time."""

    @property
    def deterministic(self) -> bool:
        return False

    def initial_state(self) -> np.ndarray:
        return self.driver.initial_state()

    def evolve(self, state, t, dt, noise):
        return self.driver.evolve(state, t, dt, noise)

    def initial_curve(self, pillars: Sequence[float] | None = None) -> Curve:
        if isinstance(getattr(self, "curve", None), Curve):
            return self.curve.with_label(self.label)
        if pillars is None:
            pillars = np.round(np.arange(1, 121) * 0.25, 10)
        pillars = np.asarray(pillars, dtype=float)
        return Curve(self.label, pillars, np.asarray(self.initial_discount(pillars), dtype=float))

    def deflated_bond(self, state, t, T):
        """``h_t P_{tT}``, the martingale the model must produce."""
        return np.asarray(self.kernel_value(state, t)) * np.asarray(self.conditional_bond(state, t, T))

    @staticmethod
    def _check_times(t, T):
        if t > T + 1e-14:
            raise ValueError(f"bond valuation time {t} is after maturity {T}")
        if t < 0.0:
            raise ValueError("valuation time must be non-negative")


# ---------------------------------------------------------------------------
# rational families


@dataclass(frozen=True)
class ExponentialMartingale:
    """``A_t = exp(vol * W_t - (vol^2/2 + compensator_shift) t) - 1`` on one coordinate.

    A non-zero ``compensator_shift`` breaks the martingale property on
    purpose; it exists for negative-control tests.
    """

    coord: int
    vol: float
    compensator_shift: float = 0.0

    def value(self, state, t):
        w = np.asarray(state)[..., self.coord]
        return np.expm1(self.vol * w - (0.5 * self.vol ** 2 + self.compensator_shift) * t)


@dataclass(frozen=True)
class RationalFactor:
    b: Callable
    driver: ExponentialMartingale


class RationalMultiplicativeModel(KernelModel):
    """Kernel ``h_t = P_{0t} prod_l (1 + b_l(t) A_{t,l})`` with martingale drivers.

    With no factors the model is deterministic: ``h_t = P_{0t}``.
    """

    def __init__(self, label: str, curve, factors: Sequence[RationalFactor] = (),
                 driver: BrownianDriver | None = None):
        self.label = label
        self.curve = curve
        self.factors = tuple(factors)
        coords = [f.driver.coord for f in self.factors]
        if len(set(coords)) != len(coords):
            raise ValueError(f"{label}: factors must load on distinct driver coordinates")
        need = max(coords) + 1 if coords else 0
        if driver is None:
            driver = BrownianDriver(need)
        if need > driver.state_dim:
            raise ValueError(f"{label}: factor coordinate beyond driver dimension {driver.state_dim}")
        for f in self.factors:
            if isinstance(f.b, ExpDecay) and not (0.0 <= f.b.level <= 1.0 and f.b.decay >= 0.0):
                raise ValueError(f"{label}: factor loading must stay in [0, 1] to keep 1 + bA positive")
        self.driver = driver

    @property
    def deterministic(self):
        return not self.factors

    def initial_discount(self, t):
        return self.curve(t)

    def _terms(self, state, t_b, t_a):
        """Per-factor ``1 + b(t_b) A_{t_a}``, checked for positivity."""
        terms = []
        for f in self.factors:
            term = 1.0 + f.b(t_b) * f.driver.value(state, t_a)
            if np.any(term <= 0.0):
                raise ValueError(f"{self.label}: non-positive factor 1 + bA encountered")
            terms.append(term)
        return terms

    def _product(self, state, t_b, t_a):
        prod = np.ones(np.shape(state)[:-1])
        for term in self._terms(state, t_b, t_a):
            prod = prod * term
        return prod

    def kernel_value(self, state, t):
        return _out(self.curve(t) * self._product(state, t, t))

    def conditional_bond(self, state, t, T):
        self._check_times(t, T)
        num = self.curve(T) * self._product(state, T, t)
        den = self.curve(t) * self._product(state, t, t)
        return _out(num / den)

    def short_rate(self, state, t):
        """Short rate and its per-factor components ``theta``."""
        thetas = []
        for f in self.factors:
            a = f.driver.value(state, t)
            thetas.append(time_derivative(f.b, t) * a / (1.0 + f.b(t) * a))
        theta = np.stack(thetas, axis=-1) if thetas else np.zeros(np.shape(state)[:-1] + (0,))
        r = curve_forward(self.curve, t) - theta.sum(axis=-1)
        return _out(r), theta


def short_rate_rational(model: RationalMultiplicativeModel, state, t):
    return model.short_rate(state, t)


def rational_spread(model_y: RationalMultiplicativeModel, model_y_long: RationalMultiplicativeModel,
                    state, t, T):
    """Ratio ``P^{long}_{tT} / P^{y}_{tT}`` for a ladder of rational models.

    The longer-tenor model must repeat the shorter one's factors and may add
    more. Returns ``(spread, deterministic_part, extra_factor_parts)`` where
    the spread is the product of the other two.
    """
    k = len(model_y.factors)
    if model_y_long.factors[:k] != model_y.factors:
        raise ValueError("the longer tenor must share the shorter tenor's factors")
    det = (model_y_long.curve(T) * model_y.curve(t)) / (model_y_long.curve(t) * model_y.curve(T))
    deltas = []
    for f in model_y_long.factors[k:]:
        a = f.driver.value(state, t)
        deltas.append((1.0 + f.b(T) * a) / (1.0 + f.b(t) * a))
    spread = det * np.prod(np.stack(deltas), axis=0) if deltas else det * np.ones(np.shape(state)[:-1])
    return _out(spread), float(det), [_out(d) for d in deltas]


class AdditiveRationalModel(KernelModel):
    """Kernel ``h_t = P_{0t} + b(t) . A_t`` for a vector martingale ``A``."""

    def __init__(self, label: str, initial_discount: Callable, b: Callable, martingale,
                 driver: Driver):
        self.label = label
        self._p0 = initial_discount
        self.b = b
        self.martingale = martingale
        self.driver = driver
        if isinstance(initial_discount, Curve):
            self.curve = initial_discount

    def initial_discount(self, t):
        return self._p0(t)

    def _affine(self, state, t_b, t_a):
        a = np.asarray(self.martingale.value(state, t_a))
        b = np.asarray(self.b(t_b))
        if a.ndim == np.ndim(state) - 1:
            a = a[..., None]
        return self._p0(t_b) + np.sum(np.atleast_1d(b) * a, axis=-1)

    def kernel_value(self, state, t):
        h = self._affine(state, t, t)
        if np.any(h <= 0.0):
            raise ValueError(f"{self.label}: non-positive kernel")
        return _out(h)

    def conditional_bond(self, state, t, T):
        self._check_times(t, T)
        return _out(self._affine(state, T, t) / self._affine(state, t, t))

    def normalized_bond(self, state, t, T):
        """Same bond through the normalised loading ``b / P_{0t}``."""
        self._check_times(t, T)
        a = np.asarray(self.martingale.value(state, t))
        if a.ndim == np.ndim(state) - 1:
            a = a[..., None]

        def bbar(s):
            return np.atleast_1d(np.asarray(self.b(s))) / self._p0(s)

        num = 1.0 + np.sum(bbar(T) * a, axis=-1)
        den = 1.0 + np.sum(bbar(t) * a, axis=-1)
        return _out(self._p0(T) / self._p0(t) * num / den)


# ---------------------------------------------------------------------------
# transformed kernels


@dataclass(frozen=True)
class ScaledTransform:
    """``f(h) = scale * h``; derived bonds equal the base bonds."""

    scale: float = 1.0
    linear: bool = field(default=True, init=False)

    def __call__(self, h):
        return self.scale * np.asarray(h)


@dataclass(frozen=True)
class PowerTransform:
    """``f(h) = h ** power``."""

    power: float
    linear: bool = field(default=False, init=False)

    def __call__(self, h):
        return np.asarray(h) ** self.power


class DerivedKernelModel(KernelModel):
    """Kernel ``f(h^{base}_t)`` for a tenor with no liquid curve of its own.

    Bonds come from the base model when ``f`` is linear and from nested Monte
    Carlo otherwise. The nested estimate is deterministic given ``seed``.
    """

    def __init__(self, label: str, base: KernelModel, transform, n_inner: int = 20000,
                 seed: int = 0):
        self.label = label
        self.base = base
        self.transform = transform
        self.driver = base.driver
        self.n_inner = int(n_inner)
        self.seed = int(seed)
        if getattr(transform, "linear", False) and getattr(transform, "scale", 1.0) <= 0.0:
            raise ValueError("a linear transform needs a positive scale")

    def _f(self, h):
        out = self.transform(h)
        if np.any(out <= 0.0):
            raise ValueError(f"{self.label}: transform produced a non-positive kernel")
        return out

    def kernel_value(self, state, t):
        h0 = self.base.kernel_value(self.base.initial_state(), 0.0)
        return _out(self._f(self.base.kernel_value(state, t)) / self._f(h0))

    def initial_discount(self, t):
        state = self.base.initial_state()
        return np.vectorize(lambda s: self.conditional_bond(state, 0.0, s))(t)

    @property
    def deterministic(self):
        return self.base.deterministic

    def derived_bond(self, state, t, T, n_inner: int | None = None, seed: int | None = None):
        """``(P_hat_{tT}, standard_error)`` for a single state."""
        self._check_times(t, T)
        state = np.asarray(state, dtype=float)
        if getattr(self.transform, "linear", False) or self.base.deterministic:
            p = self.base.conditional_bond(state, t, T)
            if getattr(self.transform, "linear", False):
                return float(p), 0.0
            h_t = self.base.kernel_value(state, t)
            return float(self._f(h_t * p) / self._f(h_t)), 0.0
        n = self.n_inner if n_inner is None else int(n_inner)
        rng = np.random.Generator(np.random.Philox(key=np.array([self.seed if seed is None else seed, 7], dtype=np.uint64)))
        end = propagate(self.driver, state, t, T, n, rng)
        vals = self._f(self.base.kernel_value(end, T)) / self._f(self.base.kernel_value(state, t))
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))

    def conditional_bond(self, state, t, T):
        state = np.asarray(state, dtype=float)
        if state.ndim == 1:
            return self.derived_bond(state, t, T)[0]
        flat = state.reshape(-1, state.shape[-1])
        out = np.array([self.derived_bond(s, t, T)[0] for s in flat])
        return out.reshape(state.shape[:-1])


def derive_kernel(model: DerivedKernelModel, state, t, T=None):
    """Derived kernel value and, when ``T`` is given, the derived bond."""
    h = model.kernel_value(state, t)
    if T is None:
        return h
    return h, model.conditional_bond(state, t, T)


# ---------------------------------------------------------------------------
# economies


@dataclass
class Economy:
    """Markets that share one driver, keyed by label."""

    driver: Driver
    markets: dict
    family: str = ""
    config: dict | None = None

    def __post_init__(self):
        for label, m in self.markets.items():
            if m.driver is not self.driver:
                raise ValueError(f"market {label!r} does not use the economy's driver")

    def __getitem__(self, label) -> KernelModel:
        try:
            return self.markets[label]
        except KeyError:
            raise KeyError(f"unknown market {label!r}; have {list(self.markets)}") from None

    @property
    def labels(self) -> list[str]:
        return list(self.markets)

    def initial_state(self):
        return self.driver.initial_state()

    @property
    def deterministic(self) -> bool:
        return all(m.deterministic for m in self.markets.values())


def deterministic_model(curve: Curve, label: str | None = None,
                        driver: Driver | None = None) -> RationalMultiplicativeModel:
    """Deterministic kernel ``h_t = P_{0t}`` off a curve."""
    return RationalMultiplicativeModel(label or curve.label, curve, (), driver or BrownianDriver(0))


def deterministic_economy(curves: Sequence[Curve]) -> Economy:
    driver = BrownianDriver(0)
    markets = {c.label: deterministic_model(c, driver=driver) for c in curves}
    return Economy(driver, markets, "rational_mult")
