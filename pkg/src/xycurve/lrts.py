"""Linear-rational term structures, their additive-rational form and the
weighted heat kernel that generates them.

The factor ``Z`` mean-reverts, ``dZ = kappa (theta - Z) dt + dM``, with a
square-root martingale part per coordinate. ``kappa`` and the heat-kernel
weight ``beta`` are diagonal and stored as vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import AdditiveRationalModel, Driver, KernelModel, _out

QUAD_WEIGHT_CUTOFF = 1e-12
QUAD_TOL = 1e-8


class SquareRootDriver(Driver):
    """Independent square-root diffusions ``dZ = kappa (theta - Z) dt + sigma sqrt(Z) dB``.

    Each step applies the exact conditional mean over ``dt`` and a diffusion
    term evaluated at ``max(Z, 0)`` (full truncation). The discrete ``Z``
    therefore keeps the exact mean-reversion, so ``e^{kappa t}(Z_t - theta)``
    is a martingale of the scheme itself.

    ``drift_shift`` moves the simulated long-run level away from ``theta``
    without telling the bond formula; it is for negative-control tests only.
    """

    def __init__(self, kappa, theta, sigma, z0, drift_shift: float = 0.0, max_dt: float = 1.0 / 500):
        self.kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
        m = self.kappa.size
        self.theta = np.broadcast_to(np.asarray(theta, dtype=float), (m,)).copy()
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (m,)).copy()
        self.z0 = np.broadcast_to(np.asarray(z0, dtype=float), (m,)).copy()
        self.drift_shift = float(drift_shift)
        self.max_dt = float(max_dt)
        if np.any(self.kappa <= 0.0):
            raise ValueError("mean-reversion speeds must be positive")
        if np.any(self.theta < 0.0) or np.any(self.z0 < 0.0) or np.any(self.sigma < 0.0):
            raise ValueError("theta, sigma and z0 must be non-negative")
        if np.any(2.0 * self.kappa * self.theta < self.sigma ** 2):
            raise ValueError("square-root parameters violate 2 kappa theta >= sigma^2")
        self.state_dim = m
        self.noise_dim = m

    def initial_state(self):
        return self.z0.copy()

    def conditional_mean(self, z, tau):
        return self.theta + np.exp(-self.kappa * tau) * (np.asarray(z) - self.theta)

    def evolve(self, state, t, dt, noise, drift=None):
        if drift is not None:
            raise NotImplementedError("measure changes are not available for square-root drivers")
        level = self.theta + self.drift_shift
        decay = np.exp(-self.kappa * dt)
        mean = level + decay * (state - level)
        var = self.sigma ** 2 * np.maximum(state, 0.0) * (-np.expm1(-2.0 * self.kappa * dt)) / (2.0 * self.kappa)
        return mean + np.sqrt(var) * noise

    def to_dict(self):
        return {"kappa": self.kappa.tolist(), "theta": self.theta.tolist(), "sigma": self.sigma.tolist(),
                "z0": self.z0.tolist(), "drift_shift": self.drift_shift}


class LrtsModel(KernelModel):
    """Kernel ``zeta_t = e^{-alpha t}(phi + psi . Z_t)``, normalised to ``h_0 = 1``."""

    def __init__(self, label: str, alpha: float, phi: float, psi, driver: SquareRootDriver):
        self.label = label
        self.alpha = float(alpha)
        self.phi = float(phi)
        self.psi = np.broadcast_to(np.asarray(psi, dtype=float), (driver.state_dim,)).copy()
        self.driver = driver
        if self.phi <= 0.0 or np.any(self.psi < 0.0):
            raise ValueError("need phi > 0 and psi >= 0 so that phi + psi.z > 0 for z >= 0")
        self.zeta0 = self.phi + float(self.psi @ driver.z0)

    @property
    def kappa(self):
        return self.driver.kappa

    @property
    def theta(self):
        return self.driver.theta

    def valid_state(self, state):
        return self.phi + np.asarray(state) @ self.psi > 0.0

    def zeta(self, state, t):
        return _out(np.exp(-self.alpha * t) * (self.phi + np.asarray(state) @ self.psi))

    def kernel_value(self, state, t):
        return _out(np.asarray(self.zeta(state, t)) / self.zeta0)

    def conditional_bond(self, state, t, T):
        self._check_times(t, T)
        z = np.asarray(state)
        den = self.phi + z @ self.psi
        if np.any(den <= 0.0):
            raise ValueError(f"{self.label}: state outside the positivity region")
        decay = np.exp(-self.kappa * (T - t))
        num = self.phi + self.psi @ self.theta + (decay * (z - self.theta)) @ self.psi
        return _out(np.exp(-self.alpha * (T - t)) * num / den)

    def initial_discount(self, t):
        t = np.asarray(t, dtype=float)
        z0, th = self.driver.z0, self.theta
        decay = np.exp(-np.multiply.outer(t, self.kappa))
        inner = self.phi + (th + decay * (z0 - th)) @ self.psi
        return _out(np.exp(-self.alpha * t) * inner / self.zeta0)


def lrts_bond(model: LrtsModel, z_state, t, T):
    return model.conditional_bond(z_state, t, T)


@dataclass(frozen=True)
class LrtsMartingale:
    """``A_t = int_0^t e^{kappa s} dM_s``, recovered from ``Z_t`` as
    ``e^{kappa t}(Z_t - theta) - (Z_0 - theta)``."""

    driver: SquareRootDriver

    def value(self, state, t):
        d = self.driver
        return np.exp(d.kappa * t) * (np.asarray(state) - d.theta) - (d.z0 - d.theta)


def lrts_decompose(model: LrtsModel) -> AdditiveRationalModel:
    """Additive-rational model ``P_{0t} + b(t) . A_t`` with the same bonds."""
    d = model.driver

    def b(t):
        return np.exp(-model.alpha * t) * model.psi * np.exp(-d.kappa * t) / model.zeta0

    return AdditiveRationalModel(model.label, model.initial_discount, b, LrtsMartingale(d), d)


def factor_path(driver: SquareRootDriver, t):
    """Noise-free solution ``e^{-kappa t}(Z_0 + (e^{kappa t} - 1) theta)``."""
    return np.exp(-driver.kappa * t) * (driver.z0 + np.expm1(driver.kappa * t) * driver.theta)


@dataclass(frozen=True)
class WhkSpec:
    """Weighted heat kernel with weight ``e^{-beta (t+u)}`` on ``F(t, z) = z``."""

    model: LrtsModel
    beta: np.ndarray

    def f1(self, t):
        m = self.model
        return np.exp(-m.alpha * t) * m.psi * np.exp(self.beta * t) * (self.beta + m.kappa)

    def f0(self, t):
        m = self.model
        coef = 1.0 / (self.beta + m.kappa) - 1.0 / self.beta
        return float(self.f1(t) @ (coef * np.exp(-self.beta * t) * m.theta)) + np.exp(-m.alpha * t) * m.phi


def whk_build(model: LrtsModel, beta) -> WhkSpec:
    beta = np.broadcast_to(np.asarray(beta, dtype=float), model.kappa.shape).copy()
    if np.any(beta <= 0.0):
        raise ValueError("heat-kernel weights need beta > 0")
    if np.any(np.abs(beta + model.kappa) < 1e-14):
        raise ValueError("beta + kappa is singular")
    return WhkSpec(model, beta)


def whk_closed_form(whk: WhkSpec, z_state, t):
    """The heat-kernel integral evaluated analytically."""
    m = whk.model
    z = np.asarray(z_state, dtype=float)
    integral = np.exp(-whk.beta * t) * (m.theta / whk.beta + (z - m.theta) / (whk.beta + m.kappa))
    return _out(whk.f0(t) + integral @ whk.f1(t))


def _simpson(values, h):
    return h / 3.0 * (values[..., 0] + values[..., -1] + 4.0 * values[..., 1:-1:2].sum(axis=-1)
                      + 2.0 * values[..., 2:-1:2].sum(axis=-1))


def whk_quadrature(whk: WhkSpec, z_state, t, panels: int | None = None, tol: float = QUAD_TOL,
                   max_panels: int = 1 << 16):
    """Heat-kernel value by composite Simpson quadrature over ``u``.

    The conditional mean ``E[Z_{t+u} | Z_t]`` comes from the factor dynamics,
    the integral is truncated where the weight falls below 1e-12, and the
    panel count doubles until successive results move by less than ``tol``.
    Pass ``panels`` to fix the panel count instead. Returns ``(value, panels)``.
    """
    m = whk.model
    z = np.asarray(z_state, dtype=float)
    u_max = np.log(1.0 / QUAD_WEIGHT_CUTOFF) / whk.beta.min()
    f1 = whk.f1(t)
    f0 = whk.f0(t)

    def estimate(n):
        u = np.linspace(0.0, u_max, n + 1)
        weight = np.exp(-np.multiply.outer(whk.beta, t + u))              # (m, n+1)
        mean = m.theta[:, None] + np.exp(-np.multiply.outer(m.kappa, u)) * (z[..., :, None] - m.theta[:, None])
        integrand = (f1[:, None] * weight * mean).sum(axis=-2)
        return f0 + _simpson(integrand, u_max / n)

    if panels is not None:
        return _out(estimate(panels)), panels
    n = 16
    prev = estimate(n)
    while n < max_panels:
        n *= 2
        cur = estimate(n)
        if np.max(np.abs(cur - prev)) < tol:
            return _out(cur), n
        prev = cur
    return _out(prev), n


def lrts_simulate(economy, times, n_paths: int, seed: int, maturities=None):
    """Scenario of ``Z`` (and all derived quantities) for an LRTS economy."""
    from .mc import simulate

    return simulate(economy, times, n_paths, seed, maturities=maturities)
