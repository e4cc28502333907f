"""Scenario generation and Monte Carlo diagnostics.

Paths are generated in fixed blocks of :data:`BLOCK_SIZE`. Block ``b`` draws
its normals from a Philox counter-based generator keyed by ``(seed, b)``, so
a path's noise depends only on the seed and its own index: adding paths never
changes existing ones, and results are bit-for-bit reproducible.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conversion import q_forward, quanto_bond
from .instruments import FraSpec
from .kernels import Economy

BLOCK_SIZE = 4096
MIN_PATHS = 1000
SE_THRESHOLD = 3.5
EXACT_TOL = 1e-12
FORMAT = "xycurve-scenario"


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, (int(stream) << 32) | int(block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class ScenarioSet:
    """Simulated states and per-market kernels/bonds on an observation grid.

    ``h[label]`` has shape ``(paths, slices)`` and ``P[label]`` shape
    ``(paths, slices, maturities)``, NaN where the slice is past maturity.
    """

    times: np.ndarray
    maturities: np.ndarray
    labels: list
    states: np.ndarray
    h: dict
    P: dict
    seed: int
    aborted: np.ndarray
    measure: str = "P"
    stream: int = 0
    config: dict | None = None
    economy: Economy | None = field(default=None, repr=False, compare=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def live(self) -> np.ndarray:
        return ~self.aborted

    def slice_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-10:
            raise KeyError(f"time {t} is not on the scenario grid")
        return idx

    def maturity_index(self, T: float) -> int:
        idx = int(np.argmin(np.abs(self.maturities - T)))
        if self.maturities.size == 0 or abs(self.maturities[idx] - T) > 1e-10:
            raise KeyError(f"maturity {T} was not stored")
        return idx

    def bond(self, label: str, T: float) -> np.ndarray:
        return self.P[label][:, :, self.maturity_index(T)]

    # persistence -----------------------------------------------------------

    def _columns(self):
        cols = [("times", self.times), ("maturities", self.maturities), ("states", self.states),
                ("aborted", self.aborted.astype(np.uint8))]
        for label in self.labels:
            cols.append((f"h/{label}", self.h[label]))
            cols.append((f"P/{label}", self.P[label]))
        return cols

    def save(self, path) -> Path:
        """Write the binary column file and its ``.json`` sidecar; returns the sidecar path."""
        path = Path(path)
        header = {"format": FORMAT, "version": 1, "seed": int(self.seed), "n_paths": int(self.n_paths),
                  "labels": list(self.labels), "measure": self.measure, "stream": int(self.stream),
                  "block_size": BLOCK_SIZE, "config": self.config, "columns": []}
        offset = 0
        with open(path, "wb") as fh:
            for name, arr in self._columns():
                dtype = "|u1" if arr.dtype == np.uint8 else "<f8"
                data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
                header["columns"].append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                                          "offset": offset, "nbytes": len(data)})
                fh.write(data)
                offset += len(data)
        sidecar = sidecar_path(path)
        sidecar.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        return sidecar

    @classmethod
    def load(cls, path) -> "ScenarioSet":
        path = Path(path)
        header = json.loads(sidecar_path(path).read_text())
        if header.get("format") != FORMAT:
            raise ValueError(f"{path} is not a scenario file")
        raw = path.read_bytes()
        cols = {}
        for col in header["columns"]:
            buf = raw[col["offset"]:col["offset"] + col["nbytes"]]
            if len(buf) != col["nbytes"]:
                raise ValueError(f"{path} is truncated")
            cols[col["name"]] = np.frombuffer(buf, dtype=col["dtype"]).reshape(col["shape"]).copy()
        labels = header["labels"]
        return cls(cols["times"], cols["maturities"], labels, cols["states"],
                   {lb: cols[f"h/{lb}"] for lb in labels}, {lb: cols[f"P/{lb}"] for lb in labels},
                   header["seed"], cols["aborted"].astype(bool), header["measure"], header["stream"],
                   header["config"])

    def to_csv(self, path) -> None:
        """Long-format export: one row per path, slice and market."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "t", "market", "h"] + [f"P_{float(T)!r}" for T in self.maturities])
            for i in range(self.n_paths):
                for j, t in enumerate(self.times):
                    for label in self.labels:
                        writer.writerow([i, repr(float(t)), label, repr(float(self.h[label][i, j]))]
                                        + [repr(float(v)) for v in self.P[label][i, j]])


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def simulate(economy: Economy, times, n_paths: int, seed: int, maturities=None, drift=None,
             stream: int = 0, measure: str = "P") -> ScenarioSet:
    """Simulate the economy's driver and evaluate every market on the grid.

    ``times`` must start at 0. ``drift`` (a function of time returning the
    Brownian drift rate) runs the simulation under another measure; the
    ``measure`` string only labels the result.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("observation times must start at 0 and increase strictly")
    if n_paths < 1:
        raise ValueError("need at least one path")
    maturities = times[1:].copy() if maturities is None else np.asarray(maturities, dtype=float)
    driver = economy.driver
    n_blocks = -(-n_paths // BLOCK_SIZE)
    states = np.empty((n_blocks * BLOCK_SIZE, times.size, driver.state_dim))
    aborted = np.zeros(n_blocks * BLOCK_SIZE, dtype=bool)
    checks = [m.valid_state for m in economy.markets.values() if hasattr(m, "valid_state")]
    plan = []
    for j in range(times.size - 1):
        k = driver.substeps(times[j], times[j + 1])
        plan.append((times[j], (times[j + 1] - times[j]) / k, k))
    for b in range(n_blocks):
        rng = block_generator(seed, b, stream)
        rows = slice(b * BLOCK_SIZE, (b + 1) * BLOCK_SIZE)
        state = np.broadcast_to(driver.initial_state(), (BLOCK_SIZE, driver.state_dim)).copy()
        dead = np.zeros(BLOCK_SIZE, dtype=bool)
        states[rows, 0] = state
        for j, (t0, dt, k) in enumerate(plan):
            t = t0
            for _ in range(k):
                noise = rng.standard_normal((BLOCK_SIZE, driver.noise_dim))
                state = driver.evolve(state, t, dt, noise, drift)
                t += dt
                for check in checks:
                    bad = ~check(state) & ~dead
                    if bad.any():
                        dead |= bad
                        state[bad] = np.nan
            states[rows, j + 1] = state
        aborted[rows] = dead
    states = states[:n_paths]
    aborted = aborted[:n_paths]
    h, P = {}, {}
    with np.errstate(invalid="ignore"):
        for label, model in economy.markets.items():
            h[label] = np.stack([np.asarray(model.kernel_value(states[:, j], t), dtype=float)
                                 * np.ones(n_paths) for j, t in enumerate(times)], axis=1)
            bonds = np.full((n_paths, times.size, maturities.size), np.nan)
            for j, t in enumerate(times):
                for k, T in enumerate(maturities):
                    if t <= T + 1e-12:
                        bonds[:, j, k] = model.conditional_bond(states[:, j], t, T)
            P[label] = bonds
    return ScenarioSet(times, maturities, list(economy.labels), states, h, P, int(seed), aborted,
                       measure, stream, economy.config, economy)


# ---------------------------------------------------------------------------
# martingale diagnostics


@dataclass
class MartingaleReport:
    name: str
    times: list
    initial: float
    means: list
    std_errors: list
    z_scores: list
    passed: bool
    n_paths: int

    def to_dict(self) -> dict:
        return {"name": self.name, "times": self.times, "initial": self.initial, "means": self.means,
                "std_errors": self.std_errors, "z_scores": self.z_scores, "passed": self.passed,
                "n_paths": self.n_paths}


def martingale_test_values(times, values, name: str = "", initial: float | None = None,
                           threshold: float = SE_THRESHOLD) -> MartingaleReport:
    """Check that the cross-sectional mean of ``values`` stays at its start.

    ``values`` has shape ``(paths, slices)``; NaN columns (process not defined
    at that slice) are skipped. A slice passes when its mean is within
    ``threshold`` standard errors of the initial value, or within 1e-12 when
    the standard error vanishes.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] < MIN_PATHS:
        raise ValueError(f"martingale tests need at least {MIN_PATHS} paths, got {values.shape[0]}")
    if initial is None:
        initial = float(np.mean(values[:, 0]))
    out_t, means, ses, zs = [], [], [], []
    passed = True
    for j in range(values.shape[1]):
        col = values[:, j]
        col = col[np.isfinite(col)]
        if col.size == 0:
            continue
        mean = float(col.mean())
        # identical values have no sampling error; std() would leave rounding dust
        se = float(col.std(ddof=1) / np.sqrt(col.size)) if col.size > 1 and np.ptp(col) > 0.0 else 0.0
        diff = abs(mean - initial)
        ok = diff <= threshold * se + EXACT_TOL * max(1.0, abs(initial))
        z = diff / se if se > 0.0 else (0.0 if diff <= EXACT_TOL * max(1.0, abs(initial)) else float("inf"))
        passed &= bool(ok)
        out_t.append(float(times[j]))
        means.append(mean)
        ses.append(se)
        zs.append(float(z))
    return MartingaleReport(name, out_t, float(initial), means, ses, zs, bool(passed), int(values.shape[0]))


def select_process(scenario: ScenarioSet, selector) -> np.ndarray:
    """Deflated process named by ``selector``.

    ``("hP", x, T)``
        ``h^x_t P^x_{tT}``
    ``("hPL", x, y, T_prev, T_next)``
        ``h^x_t P^x_{t,T_next} L^{xy}_t`` for ``t <= T_prev``
    ``("hPv", x, y, T_prev, T_next)``
        ``h^x_t P^x_{t,T_next} v^y_t`` for ``t <= T_prev``
    ``("hV", x, fn)``
        ``h^x_t fn(state_t, t)`` with ``fn`` returning x-market values
    """
    kind = selector[0]
    live = scenario.live
    if kind == "hP":
        _, x, T = selector
        out = scenario.h[x] * scenario.bond(x, T)
    elif kind in ("hPL", "hPv"):
        _, x, y, tp, tn = selector
        d = tn - tp
        hx, px = scenario.h[x], scenario.bond(x, tn)
        py_prev, py_next = scenario.bond(y, tp), scenario.bond(y, tn)
        if kind == "hPL":
            q = scenario.h[y] * py_next / (hx * px)
            out = hx * px * q * (py_prev / py_next - 1.0) / d
        else:
            out = hx * px * py_prev / py_next
        out = np.where(scenario.times[None, :] <= tp + 1e-12, out, np.nan)
    elif kind == "hV":
        _, x, fn = selector
        out = np.stack([scenario.h[x][:, j] * np.asarray(fn(scenario.states[:, j], t))
                        for j, t in enumerate(scenario.times)], axis=1)
    else:
        raise ValueError(f"unknown process selector {kind!r}")
    return out[live]


def martingale_test(scenario: ScenarioSet, selector, threshold: float = SE_THRESHOLD) -> MartingaleReport:
    values = select_process(scenario, selector)
    name = "/".join(str(s) for s in selector if not callable(s))
    return martingale_test_values(scenario.times, values, name, threshold=threshold)


# ---------------------------------------------------------------------------
# strategies and measures


def noarb_strategy(scenario: ScenarioSet, x: str, y: str, variant: str = "money-market",
                   adjusted: bool = False, maturity: float | None = None) -> np.ndarray:
    """Value of the zero-cost strategies that would be arbitrages without conversion.

    ``money-market`` holds ``1/h^y`` of the y-numeraire against ``1/h^x``;
    ``fixed-horizon`` does the same with T-maturity bonds. The adjusted
    variants convert the y-leg into x-terms and must vanish pathwise.
    """
    hx, hy = scenario.h[x], scenario.h[y]
    if variant == "money-market":
        nx, ny = hx, hy
    elif variant == "fixed-horizon":
        if maturity is None:
            raise ValueError("the fixed-horizon strategy needs a maturity")
        nx, ny = hx * scenario.bond(x, maturity), hy * scenario.bond(y, maturity)
    else:
        raise ValueError(f"unknown strategy variant {variant!r}")
    if adjusted:
        return (ny / nx) * (1.0 / ny) - 1.0 / nx
    return 1.0 / ny - 1.0 / nx


@dataclass
class MeasureReport:
    estimates: dict
    std_errors: dict
    closed_form: float | None
    passed: bool
    skipped: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {"estimates": self.estimates, "std_errors": self.std_errors, "closed_form": self.closed_form,
                "passed": self.passed, "skipped": self.skipped, "reason": self.reason}


def _fra_payoff(mx, my, states, fra: FraSpec):
    """x-value at the reset of a developed-market FRA with strike ``K^y``."""
    k = fra.strike_y or 0.0
    tau = fra.reset
    return (np.asarray(quanto_bond(mx, my, states, tau, tau))
            - (1.0 + fra.accrual * k) * np.asarray(quanto_bond(mx, my, states, tau, fra.pay)))


def measure_consistency(economy: Economy, x: str, y: str, fra: FraSpec, n_paths: int = 100_000,
                        seed: int = 0, threshold: float = SE_THRESHOLD) -> MeasureReport:
    """Price a developed-market FRA three ways.

    (a) real-world paths deflated by the kernel ``h^x``;
    (b) bank-account-measure paths discounted by ``D^x`` (kernel factorised as
        ``h = D m``, the density ``m`` defining the measure);
    (c) forward-measure paths to the reset date, times ``P^x_{0,reset}``.

    Routes (b) and (c) are separate simulations with their own noise
    streams, so agreement is a genuine test. Deterministic economies are
    priced exactly.
    """
    from .instruments import fra_dm_value

    mx, my = economy[x], economy[y]
    state0 = economy.initial_state()
    closed = float(fra_dm_value(mx, my, state0, 0.0, fra).value) if fra.strike_x is None else None
    tau = fra.reset
    if economy.deterministic:
        payoff = float(_fra_payoff(mx, my, state0, fra))
        est = {"kernel": float(mx.kernel_value(state0, tau)) * payoff,
               "bank_account": float(mx.kernel_value(state0, tau)) * payoff,
               "forward_measure": float(mx.initial_discount(tau)) * payoff}
        ses = {k: 0.0 for k in est}
        vals = list(est.values())
        ok = max(vals) - min(vals) <= EXACT_TOL * max(1.0, max(abs(v) for v in vals))
        return MeasureReport(est, ses, closed, bool(ok))
    if not hasattr(mx, "density"):
        return MeasureReport({}, {}, closed, True, True, f"no kernel factorisation for {type(mx).__name__}")
    grid = np.array([0.0, tau])
    est, ses = {}, {}
    real = simulate(economy, grid, n_paths, seed, maturities=[], stream=1, measure="P")
    s = real.states[:, 1]
    v = np.asarray(mx.kernel_value(s, tau)) * _fra_payoff(mx, my, s, fra)
    est["kernel"], ses["kernel"] = float(v.mean()), float(v.std(ddof=1) / np.sqrt(n_paths))
    bank = simulate(economy, grid, n_paths, seed, maturities=[], drift=mx.risk_neutral_drift(), stream=2,
                    measure="Q")
    s = bank.states[:, 1]
    v = np.asarray(mx.discount(s, tau)) * _fra_payoff(mx, my, s, fra)
    est["bank_account"], ses["bank_account"] = float(v.mean()), float(v.std(ddof=1) / np.sqrt(n_paths))
    fwd = simulate(economy, grid, n_paths, seed, maturities=[], drift=mx.forward_measure_drift(tau), stream=3,
                   measure="Q_T")
    s = fwd.states[:, 1]
    v = float(mx.initial_discount(tau)) * _fra_payoff(mx, my, s, fra)
    est["forward_measure"], ses["forward_measure"] = float(v.mean()), float(v.std(ddof=1) / np.sqrt(n_paths))
    names = list(est)
    ok = True
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = names[i], names[j]
            ok &= abs(est[a] - est[b]) <= threshold * np.hypot(ses[a], ses[b]) + EXACT_TOL
    return MeasureReport(est, ses, closed, bool(ok))


def domination_check(scenario: ScenarioSet, x: str, y: str, t_prev: float, t_next: float) -> dict:
    """Count violations of ``1 + delta L^{xy} >= 1 + delta L^x`` on premise states.

    A state at slice ``t <= t_prev`` satisfies the premise when its path has
    ``h^y_s <= h^x_s`` on every stored slice (the ordering concerns the
    future as well as the past) and every stored forward rate of both
    markets is non-negative at ``t``.
    """
    d = t_next - t_prev
    times = scenario.times
    live = scenario.live
    ordered = np.all(scenario.h[y] <= scenario.h[x] * (1.0 + 1e-14), axis=1)
    checked = violations = 0
    worst = np.inf
    for j, t in enumerate(times):
        if t > t_prev + 1e-12:
            break
        nonneg = np.ones(scenario.n_paths, dtype=bool)
        for label in (x, y):
            bonds = np.concatenate([np.ones((scenario.n_paths, 1)), scenario.P[label][:, j]], axis=1)
            mats = np.concatenate([[t], scenario.maturities])
            keep = mats >= t - 1e-12
            nonneg &= np.all(np.diff(bonds[:, keep], axis=1) <= 1e-15, axis=1)
        premise = ordered & nonneg & live
        if not premise.any():
            continue
        hx, hy = scenario.h[x][premise, j], scenario.h[y][premise, j]
        px_prev, px_next = scenario.bond(x, t_prev)[premise, j], scenario.bond(x, t_next)[premise, j]
        py_prev, py_next = scenario.bond(y, t_prev)[premise, j], scenario.bond(y, t_next)[premise, j]
        v_x = px_prev / px_next
        q_next = hy * py_next / (hx * px_next)
        v_bar = 1.0 + q_next * (py_prev / py_next - 1.0)
        gap = v_bar - v_x
        checked += int(premise.sum())
        violations += int(np.sum(gap < -1e-14))
        worst = min(worst, float(gap.min()))
    return {"states_checked": checked, "violations": violations,
            "worst_gap": None if checked == 0 else worst,
            "passed": violations == 0, "skipped": checked == 0}
