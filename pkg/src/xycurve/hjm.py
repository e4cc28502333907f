"""Gaussian HJM kernels for a pair of markets sharing Brownian drivers.

Each Brownian coordinate ``k`` carries a mean-reversion speed ``kappa_k``; a
market loads on it with bond volatility ``sigma_{tu,k} = s_k e^{-kappa_k (u-t)}``
and market price of risk ``lambda_k``. With deterministic coefficients the
deflated bond ``h_t P_{tT}`` is an exponential martingale whose stochastic
integral is a linear function of ``(W_t, Y_t)``, where
``Y_t = int_0^t e^{kappa u} dW_u`` (``int_0^t u dW_u`` when ``kappa = 0``). The
driver simulates that pair exactly, so every simulated quantity is exact in
distribution on any time grid.

In the two-market layout the x-market loads only on the first ``n`` (shared)
coordinates; the y-market loads on those and on ``m`` idiosyncratic ones, and
its market price of risk on the shared block equals the x-market's.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .kernels import Driver, Economy, KernelModel, _out, curve_forward, step_integral
from .term import Curve

SIGMA_QUAD_TOL = 1e-10


class GaussianHjmDriver(Driver):
    """Exact simulation of ``(W, Y)`` per Brownian coordinate."""

    def __init__(self, kappa):
        self.kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
        if np.any(self.kappa < 0.0):
            raise ValueError("mean-reversion speeds must be non-negative")
        self.dim = self.kappa.size
        self.state_dim = 2 * self.dim
        self.noise_dim = 2 * self.dim

    def initial_state(self):
        return np.zeros(self.state_dim)

    def _moments(self, t, dt):
        k = self.kappa
        pos = k > 0.0
        ks = np.where(pos, k, 1.0)
        t1 = t + dt
        cov = np.where(pos, np.exp(ks * t) * np.expm1(ks * dt) / ks, 0.5 * (t1 ** 2 - t ** 2))
        var_y = np.where(pos, np.exp(2 * ks * t) * np.expm1(2 * ks * dt) / (2 * ks), (t1 ** 3 - t ** 3) / 3.0)
        return cov, var_y

    def weight(self, u):
        """Integrand weight ``g_k(u)`` defining ``Y = int g dW``."""
        u = np.asarray(u, dtype=float)
        return np.where(self.kappa > 0.0, np.exp(self.kappa * u), u)

    def evolve(self, state, t, dt, noise, drift=None):
        d = self.dim
        cov, var_y = self._moments(t, dt)
        z1, z2 = noise[..., :d], noise[..., d:]
        sd = np.sqrt(dt)
        dw = sd * z1
        dy = (cov / sd) * z1 + np.sqrt(np.maximum(var_y - cov ** 2 / dt, 0.0)) * z2
        if drift is not None:
            dw = dw + step_integral(drift, t, t + dt)
            dy = dy + step_integral(lambda u: self.weight(u) * drift(u), t, t + dt)
        return np.concatenate([state[..., :d] + dw, state[..., d:] + dy], axis=-1)

    def to_dict(self):
        return {"kappa": self.kappa.tolist()}


def _loading(kappa, tau):
    """``B(tau) = (1 - e^{-kappa tau}) / kappa`` with the ``kappa = 0`` limit."""
    tau = np.asarray(tau, dtype=float)
    pos = kappa > 0.0
    ks = np.where(pos, kappa, 1.0)
    return np.where(pos, -np.expm1(-np.multiply.outer(tau, ks)) / ks, np.multiply.outer(tau, np.ones_like(kappa)))


class GaussianHjmModel(KernelModel):
    """One market of the Gaussian HJM family.

    ``drift_shift`` adds ``drift_shift * (T - t)`` to the bond drift integral,
    violating the drift condition on purpose (negative controls only).
    """

    def __init__(self, label: str, curve, sigma, lam, driver: GaussianHjmDriver,
                 drift_shift: float = 0.0):
        self.label = label
        self.curve = curve
        self.driver = driver
        d = driver.dim
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (d,)).copy()
        self.lam = np.broadcast_to(np.asarray(lam, dtype=float), (d,)).copy()
        self.drift_shift = float(drift_shift)

    @property
    def kappa(self):
        return self.driver.kappa

    @property
    def deterministic(self):
        return not (np.any(self.sigma) or np.any(self.lam))

    def initial_discount(self, t):
        return self.curve(t)

    # deterministic coefficient functions -----------------------------------

    def vol(self, t, u):
        """``sigma_{tu}`` per coordinate."""
        return self.sigma * np.exp(-self.kappa * (u - t))

    def integrated_vol(self, t, T):
        """``Sigma_{tT} = int_t^T sigma_{tu} du`` per coordinate."""
        return self.sigma * _loading(self.kappa, T - t)

    def drift_integral(self, t, T):
        """``A_{tT}``: half the squared integrated volatility, plus any deliberate shift."""
        s = self.integrated_vol(t, T)
        return 0.5 * np.sum(s * s, axis=-1) + self.drift_shift * (T - t)

    def _sq_integral(self, t, T):
        """``int_0^t |Sigma_{uT} + lambda|^2 du`` summed over coordinates."""
        k, s, lam = self.kappa, self.sigma, self.lam
        pos = k > 0.0
        ks = np.where(pos, k, 1.0)
        c = s / ks
        e1 = (np.exp(-ks * (T - t)) - np.exp(-ks * T)) / ks
        e2 = (np.exp(-2 * ks * (T - t)) - np.exp(-2 * ks * T)) / (2 * ks)
        mr = (c + lam) ** 2 * t - 2 * (c + lam) * c * e1 + c * c * e2
        # kappa = 0: integrand (s (T-u) + lam)^2
        a, b = s * T + lam, s * (T - t) + lam
        with np.errstate(divide="ignore", invalid="ignore"):
            hl = np.where(s != 0.0, (a ** 3 - b ** 3) / (3 * np.where(s != 0.0, s, 1.0)), lam ** 2 * t)
        return float(np.sum(np.where(pos, mr, hl)))

    def _d_sq_integral(self, t, T):
        """``d/dT`` of :meth:`_sq_integral`."""
        k, s, lam = self.kappa, self.sigma, self.lam
        pos = k > 0.0
        ks = np.where(pos, k, 1.0)
        c = s / ks
        e1 = (np.exp(-ks * (T - t)) - np.exp(-ks * T)) / ks
        e2 = (np.exp(-2 * ks * (T - t)) - np.exp(-2 * ks * T)) / (2 * ks)
        mr = 2 * s * ((c + lam) * e1 - c * e2)
        hl = 2 * s * (s * T * t - 0.5 * s * t * t + lam * t)
        return float(np.sum(np.where(pos, mr, hl)))

    # state functions -------------------------------------------------------

    def _split(self, state):
        state = np.asarray(state, dtype=float)
        d = self.driver.dim
        return state[..., :d], state[..., d:]

    def _stoch_integral(self, state, T):
        """``int_0^t (Sigma_{uT} + lambda) . dW_u`` from the state."""
        w, y = self._split(state)
        k = self.kappa
        pos = k > 0.0
        ks = np.where(pos, k, 1.0)
        integ = np.where(pos, (w - np.exp(-ks * T) * y) / ks, T * w - y)
        return (integ * self.sigma + w * self.lam).sum(axis=-1)

    def log_deflated_bond(self, state, t, T):
        self._check_times(t, T)
        shift = self.drift_shift * (T * t - 0.5 * t * t)
        return (np.log(self.curve(T)) - self._stoch_integral(state, T)
                - 0.5 * self._sq_integral(t, T) - shift)

    def deflated_bond(self, state, t, T):
        return _out(np.exp(self.log_deflated_bond(state, t, T)))

    def kernel_value(self, state, t):
        return _out(np.exp(self.log_deflated_bond(state, t, t)))

    def conditional_bond(self, state, t, T):
        return _out(np.exp(self.log_deflated_bond(state, t, T) - self.log_deflated_bond(state, t, t)))

    def forward_rate(self, state, t, T):
        """Instantaneous forward ``f_{tT} = -d/dT ln P_{tT}``."""
        w, y = self._split(state)
        k = self.kappa
        pos = k > 0.0
        ks = np.where(pos, k, 1.0)
        d_integ = np.where(pos, np.exp(-ks * T) * y, w)
        return _out(curve_forward(self.curve, T) + (d_integ * self.sigma).sum(axis=-1)
                    + 0.5 * self._d_sq_integral(t, T) + self.drift_shift * t)

    def short_rate(self, state, t):
        return self.forward_rate(state, t, t)

    def forward_drift(self, t, T):
        """Drift of ``f_{tT}`` under the real-world measure: ``a_{tT} + lambda . sigma_{tT}``."""
        v = self.vol(t, T)
        return float(v @ (self.integrated_vol(t, T) + self.lam)) + self.drift_shift

    def density(self, state, t):
        """``m_t = exp(-lambda . W_t - |lambda|^2 t / 2)``."""
        w, _ = self._split(state)
        return _out(np.exp(-(w * self.lam).sum(axis=-1) - 0.5 * float(self.lam @ self.lam) * t))

    def discount(self, state, t):
        """Bank-account discount factor ``D_t = h_t / m_t``."""
        w, _ = self._split(state)
        log_m = -(w * self.lam).sum(axis=-1) - 0.5 * float(self.lam @ self.lam) * t
        return _out(np.exp(self.log_deflated_bond(state, t, t) - log_m))

    def risk_neutral_drift(self):
        """Drift that turns simulated Brownian motions into real-world ones
        when the simulation measure is the bank-account measure."""
        lam = self.lam.copy()
        return lambda u: -lam

    def forward_measure_drift(self, maturity):
        """Same for the ``maturity``-forward measure."""
        lam = self.lam.copy()
        return lambda u: -(lam + self.integrated_vol(u, maturity))


def integrated_vol_quadrature(vol_fn, t, T, tol: float = SIGMA_QUAD_TOL, max_level: int = 30):
    """Trapezoid integral of a volatility loading over ``[t, T]``.

    The grid doubles until the result moves by less than ``tol``; used to
    cross-check analytic integrated volatilities and for general loadings.
    """
    if T <= t:
        return np.zeros_like(np.asarray(vol_fn(t), dtype=float))
    n = 8
    u = np.linspace(t, T, n + 1)
    prev = trapezoid(np.array([vol_fn(x) for x in u]), u, axis=0)
    for _ in range(max_level):
        n *= 2
        u = np.linspace(t, T, n + 1)
        cur = trapezoid(np.array([vol_fn(x) for x in u]), u, axis=0)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    return prev


@dataclass
class HjmSpec:
    """Two-market Gaussian HJM specification.

    Shared block of size ``n`` (coordinates ``0..n-1``) and idiosyncratic
    block of size ``m`` (coordinates ``n..n+m-1``).
    """

    curve_x: Curve
    curve_y: Curve
    kappa_w: np.ndarray
    sigma_x: np.ndarray
    sigma_w: np.ndarray
    lambda_x: np.ndarray
    kappa_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drift_shift_x: float = 0.0
    drift_shift_y: float = 0.0
    labels: tuple = ("x", "y")

    def __post_init__(self):
        self.kappa_w = np.atleast_1d(np.asarray(self.kappa_w, dtype=float))
        self.kappa_z = np.atleast_1d(np.asarray(self.kappa_z, dtype=float))
        n, m = self.kappa_w.size, self.kappa_z.size
        for name, size in (("sigma_x", n), ("sigma_w", n), ("lambda_x", n), ("sigma_z", m), ("lambda_z", m)):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (size,)).copy()
            setattr(self, name, arr)

    @property
    def n(self) -> int:
        return self.kappa_w.size

    @property
    def m(self) -> int:
        return self.kappa_z.size

    def economy(self) -> Economy:
        driver = GaussianHjmDriver(np.concatenate([self.kappa_w, self.kappa_z]))
        zeros = np.zeros(self.m)
        x = GaussianHjmModel(self.labels[0], self.curve_x, np.concatenate([self.sigma_x, zeros]),
                             np.concatenate([self.lambda_x, zeros]), driver, self.drift_shift_x)
        y = GaussianHjmModel(self.labels[1], self.curve_y, np.concatenate([self.sigma_w, self.sigma_z]),
                             np.concatenate([self.lambda_x, self.lambda_z]), driver, self.drift_shift_y)
        return Economy(driver, {x.label: x, y.label: y}, "hjm_gauss")


def model_ii_restriction(spec: HjmSpec, t_prev: float, t_next: float, t: float) -> float:
    """Left-minus-right residual of the converted-FCF martingale restriction.

    Zero means ``h^x_t P^x_{t,t_next} v^y_t`` is a martingale on ``[0, t_prev]``.
    """
    econ = spec.economy()
    x, y = econ[spec.labels[0]], econ[spec.labels[1]]
    n = spec.n
    sx = x.integrated_vol(t, t_next)[:n]
    sy_next, sy_prev = y.integrated_vol(t, t_next), y.integrated_vol(t, t_prev)
    dy = sy_next - sy_prev
    lhs = y.drift_integral(t, t_next) - y.drift_integral(t, t_prev)
    rhs = -0.5 * float(dy @ dy) + float(sx @ dy[:n]) - float(spec.lambda_z @ dy[n:])
    return float(lhs - rhs)


def simulate_hjm(spec: HjmSpec, times, n_paths: int, seed: int, maturities=None, **kwargs):
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise ValueError("the simulation grid needs at least two steps")
    from .mc import simulate

    return simulate(spec.economy(), times, n_paths, seed, maturities=maturities, **kwargs)


def conversion_dynamics_check(spec: HjmSpec, scenario, maturity: float, t_prev: float | None = None,
                              t_next: float | None = None, max_step: float | None = None) -> dict:
    """Compare simulated log-increments of ``Q`` with one-step SDE predictions.

    Uses the Brownian increments stored in the scenario. Reports the largest
    absolute deviation of log-increments (a relative deviation of increments)
    for ``Q_{tT}``, ``Q_{tt}`` and, when a period is given, the converted FCF.
    The identity ``lambda^x dW^x - lambda^y dW^y = -lambda^z dZ`` is checked
    per path. Steps longer than ``max_step`` are skipped.
    """
    econ = spec.economy()
    x, y = econ[spec.labels[0]], econ[spec.labels[1]]
    n = spec.n
    times = scenario.times
    states = scenario.states
    d = x.driver.dim
    lam_z = spec.lambda_z
    report = {"q_forward": 0.0, "q_spot": 0.0, "risk_identity": 0.0}
    if t_prev is not None:
        report["converted_fcf"] = 0.0

    def log_q(st, t, T):
        return y.log_deflated_bond(st, t, T) - x.log_deflated_bond(st, t, T)

    for j in range(times.size - 1):
        t0, t1 = times[j], times[j + 1]
        dt = t1 - t0
        if max_step is not None and dt > max_step:
            continue
        s0, s1 = states[:, j], states[:, j + 1]
        dB = s1[:, :d] - s0[:, :d]
        dW, dZ = dB[:, :n], dB[:, n:]
        if t1 <= maturity:
            sx = x.integrated_vol(t0, maturity)[:n]
            sy = y.integrated_vol(t0, maturity)
            sw, sz = sy[:n], sy[n:]
            vw, vz = sx - sw, -(sz + lam_z)
            drift = float(vw @ (sx + spec.lambda_x)) - 0.5 * float(vw @ vw + vz @ vz)
            pred = drift * dt + dW @ vw + dZ @ vz
            actual = log_q(s1, t1, maturity) - log_q(s0, t0, maturity)
            report["q_forward"] = max(report["q_forward"], float(np.max(np.abs(actual - pred))))
        rx, ry = np.asarray(x.short_rate(s0, t0)), np.asarray(y.short_rate(s0, t0))
        pred = (rx - ry - 0.5 * float(lam_z @ lam_z)) * dt - dZ @ lam_z
        actual = log_q(s1, t1, t1) - log_q(s0, t0, t0)
        report["q_spot"] = max(report["q_spot"], float(np.max(np.abs(actual - pred))))
        lhs = dB @ x.lam - dB @ y.lam
        report["risk_identity"] = max(report["risk_identity"], float(np.max(np.abs(lhs + dZ @ lam_z))))
        if t_prev is not None and t1 <= t_prev:
            sx = x.integrated_vol(t0, t_next)[:n]
            sy_prev = y.integrated_vol(t0, t_prev)
            vw = sx - sy_prev[:n]
            vz = -(sy_prev[n:] + lam_z)
            drift = float(vw @ (sx + spec.lambda_x)) - 0.5 * float(vw @ vw + vz @ vz)
            pred = drift * dt + dW @ vw + dZ @ vz

            def log_v(st, t):
                return y.log_deflated_bond(st, t, t_prev) - x.log_deflated_bond(st, t, t_next)

            actual = log_v(s1, t1) - log_v(s0, t0)
            report["converted_fcf"] = max(report["converted_fcf"], float(np.max(np.abs(actual - pred))))
    return report
