"""Time grids, discount curves, quote sets and single-period rate arithmetic.

All times are year fractions and all rates are decimals. There are no
calendars or day counts: an accrual is simply the difference of two times.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLAT_HORIZON = 100.0
INTERPOLATION = "log_linear_df"


@dataclass(frozen=True)
class Schedule:
    """Ordered reset/payment times ``T_0 < T_1 < ... < T_n``."""

    reset_times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.reset_times)
        if len(times) < 2:
            raise ValueError("a schedule needs at least two times")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError(f"schedule times must be strictly increasing: {times}")
        if times[0] < 0.0:
            raise ValueError("schedule times must be non-negative")
        object.__setattr__(self, "reset_times", times)

    @classmethod
    def regular(cls, start: float, end: float, step: float) -> "Schedule":
        """Equally spaced schedule from ``start`` to ``end``.

        ``end - start`` must be a whole number of ``step`` periods (to 1e-9).
        """
        n = (end - start) / step
        k = int(round(n))
        if k < 1 or abs(n - k) > 1e-9:
            raise ValueError(f"({start}, {end}) is not a whole number of {step} periods")
        return cls(tuple(start + i * step for i in range(k)) + (float(end),))

    @property
    def accruals(self) -> np.ndarray:
        return np.diff(np.asarray(self.reset_times))

    @property
    def start(self) -> float:
        return self.reset_times[0]

    @property
    def end(self) -> float:
        return self.reset_times[-1]

    @property
    def payment_times(self) -> tuple[float, ...]:
        return self.reset_times[1:]

    def __len__(self) -> int:
        return len(self.reset_times) - 1


@dataclass(frozen=True, eq=False)
class Curve:
    """Discount curve through ``(t, df)`` pillars.

    Log-linear interpolation of discount factors between pillars and a flat
    continuously compounded zero rate beyond the last pillar. The point
    ``(0, 1)`` is implicit.
    """

    label: str
    times: np.ndarray
    dfs: np.ndarray
    _log_times: np.ndarray = field(init=False, repr=False, compare=False)
    _log_dfs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        dfs = np.asarray(self.dfs, dtype=float).ravel()
        if times.shape != dfs.shape or times.size == 0:
            raise ValueError("a curve needs matching, non-empty time and df arrays")
        if np.any(~np.isfinite(times)) or np.any(~np.isfinite(dfs)):
            raise ValueError("curve pillars must be finite")
        if np.any(dfs <= 0.0):
            raise ValueError(f"curve {self.label!r} has non-positive discount factors")
        if times[0] == 0.0:
            if abs(dfs[0] - 1.0) > 1e-14:
                raise ValueError("df at t=0 must equal 1")
            times, dfs = times[1:], dfs[1:]
        if times.size == 0:
            raise ValueError("a curve needs at least one pillar after t=0")
        if np.any(times <= 0.0) or np.any(np.diff(times) <= 0.0):
            raise ValueError("pillar times must be positive and strictly increasing")
        times.setflags(write=False)
        dfs.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "dfs", dfs)
        object.__setattr__(self, "_log_times", np.concatenate(([0.0], times)))
        object.__setattr__(self, "_log_dfs", np.concatenate(([0.0], np.log(dfs))))

    @classmethod
    def from_pillars(cls, label: str, pillars: Iterable[tuple[float, float]]) -> "Curve":
        pts = list(pillars)
        return cls(label, np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))

    @classmethod
    def flat(cls, rate: float, label: str = "flat") -> "Curve":
        """Curve with df(t) = exp(-rate * t) everywhere."""
        return cls(label, np.array([FLAT_HORIZON]), np.array([np.exp(-rate * FLAT_HORIZON)]))

    @property
    def pillars(self) -> list[tuple[float, float]]:
        return [(float(t), float(d)) for t, d in zip(self.times, self.dfs)]

    @property
    def last_zero_rate(self) -> float:
        return float(-self._log_dfs[-1] / self._log_times[-1])

    def log_df(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("discount factors are only defined for t >= 0")
        inside = np.interp(t, self._log_times, self._log_dfs)
        return np.where(t <= self._log_times[-1], inside, -self.last_zero_rate * t)

    def df(self, t):
        """Discount factor ``P_{0t}``; scalar in, float out."""
        out = np.exp(self.log_df(t))
        return float(out) if out.ndim == 0 else out

    def __call__(self, t):
        return self.df(t)

    def inst_forward(self, t):
        """Right-continuous instantaneous forward rate ``-d/dt ln P_{0t}``."""
        t = np.asarray(t, dtype=float)
        slopes = -np.diff(self._log_dfs) / np.diff(self._log_times)
        idx = np.searchsorted(self._log_times, t, side="right") - 1
        fwd = np.where(idx >= slopes.size, self.last_zero_rate, slopes[np.minimum(idx, slopes.size - 1)])
        return float(fwd) if fwd.ndim == 0 else fwd

    def with_label(self, label: str) -> "Curve":
        return Curve(label, self.times.copy(), self.dfs.copy())

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "interpolation": INTERPOLATION,
            "pillars": [{"t": t, "df": d} for t, d in self.pillars],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Curve":
        interp = data.get("interpolation", INTERPOLATION)
        if interp != INTERPOLATION:
            raise ValueError(f"unsupported interpolation {interp!r}")
        try:
            pillars = [(float(p["t"]), float(p["df"])) for p in data["pillars"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed curve pillars: {exc}") from exc
        return cls.from_pillars(str(data.get("label", "")), pillars)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Curve":
        return cls.from_dict(json.loads(Path(path).read_text()))


def spot_ibor(df_value, delta):
    """Simple rate over one accrual implied by a discount factor."""
    df_value = np.asarray(df_value, dtype=float)
    if np.any(df_value <= 0.0) or delta <= 0.0:
        raise ValueError("spot_ibor needs a positive discount factor and accrual")
    out = (1.0 / df_value - 1.0) / delta
    return float(out) if out.ndim == 0 else out


def forward_ibor_single_curve(curve: Curve, t_prev: float, t_next: float) -> float:
    """Forward simple rate over ``[t_prev, t_next]`` off a single curve."""
    if not 0.0 <= t_prev < t_next:
        raise ValueError(f"need 0 <= t_prev < t_next, got ({t_prev}, {t_next})")
    return (curve.df(t_prev) / curve.df(t_next) - 1.0) / (t_next - t_prev)


def fcf(rate, delta):
    """Forward capitalisation factor ``1 + delta * rate``."""
    rate = np.asarray(rate, dtype=float)
    if delta <= 0.0:
        raise ValueError("accrual must be positive")
    if np.any(rate <= -1.0 / delta):
        raise ValueError("rate must exceed -1/delta for a positive capitalisation factor")
    out = 1.0 + delta * rate
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuoteSet:
    """Deposit, FRA strip and swap quotes for one forecasting curve.

    ``deposit`` is ``(tenor, rate)`` starting at 0, ``fras`` are
    ``(start, end, rate)`` and ``swaps`` are ``(maturity, rate)`` with a
    fixed leg on the deposit-tenor grid.
    """

    market: str
    deposit: tuple[float, float]
    fras: tuple[tuple[float, float, float], ...] = ()
    swaps: tuple[tuple[float, float], ...] = ()
    discount_curve_ref: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "deposit", tuple(float(v) for v in self.deposit))
        object.__setattr__(self, "fras", tuple(tuple(float(v) for v in f) for f in self.fras))
        object.__setattr__(self, "swaps", tuple(tuple(float(v) for v in s) for s in self.swaps))
        tenor, rate = self.deposit
        if tenor <= 0.0:
            raise ValueError("deposit tenor must be positive")
        ends = [tenor] + [f[1] for f in self.fras] + [s[0] for s in self.swaps]
        if any(b <= a for a, b in zip(ends[:-1], ends[1:])):
            raise ValueError(f"quote maturities are not strictly increasing: {ends}")
        for name, start, end, q in self.iter_quotes():
            if end <= start:
                raise ValueError(f"{name} has end <= start")
            if name != "IRS" and q <= -1.0 / (end - start):
                raise ValueError(f"{name} ({start}, {end}) rate {q} implies a non-positive capitalisation factor")

    def iter_quotes(self):
        """Yield ``(type, start, end, quote)`` rows in maturity order."""
        tenor, rate = self.deposit
        yield ("DEPO", 0.0, tenor, rate)
        for start, end, q in self.fras:
            yield ("FRA", start, end, q)
        for mat, q in self.swaps:
            yield ("IRS", 0.0, mat, q)

    @property
    def accrual_step(self) -> float:
        return self.deposit[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["type", "market", "start", "end", "quote"])
            for kind, start, end, q in self.iter_quotes():
                writer.writerow([kind, self.market, repr(start), repr(end), repr(q)])

    @classmethod
    def from_rows(cls, rows: Sequence[dict], market: str | None = None,
                  discount_curve_ref: str | None = None) -> "QuoteSet":
        if not rows:
            raise ValueError("no quotes found")
        markets = sorted({r["market"] for r in rows})
        if market is None:
            if len(markets) != 1:
                raise ValueError(f"several markets in quote file, pick one of {markets}")
            market = markets[0]
        rows = [r for r in rows if r["market"] == market]
        if not rows:
            raise ValueError(f"no quotes for market {market!r}")
        depos = [r for r in rows if r["type"] == "DEPO"]
        if len(depos) != 1:
            raise ValueError(f"expected exactly one DEPO quote for {market!r}, found {len(depos)}")
        d = depos[0]
        if d["start"] != 0.0:
            raise ValueError("the deposit must start at t=0")
        fras = [(r["start"], r["end"], r["quote"]) for r in rows if r["type"] == "FRA"]
        swaps = []
        for r in rows:
            if r["type"] == "IRS":
                if r["start"] != 0.0:
                    raise ValueError("swaps must start at t=0")
                swaps.append((r["end"], r["quote"]))
        return cls(market, (d["end"] - d["start"], d["quote"]), tuple(fras), tuple(swaps),
                   discount_curve_ref)

    @classmethod
    def from_csv(cls, path, market: str | None = None,
                 discount_curve_ref: str | None = None) -> "QuoteSet":
        rows = read_quote_rows(path)
        return cls.from_rows(rows, market, discount_curve_ref)


def read_quote_rows(path) -> list[dict]:
    """Parse a quote CSV into dicts with float times and quotes."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["type", "market", "start", "end", "quote"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise ValueError(f"quote file header must be {','.join(expected)}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            kind = (raw.get("type") or "").strip().upper()
            if kind not in ("DEPO", "FRA", "IRS"):
                raise ValueError(f"line {lineno}: unknown quote type {raw.get('type')!r}")
            try:
                rows.append({
                    "type": kind,
                    "market": (raw.get("market") or "").strip(),
                    "start": float(raw["start"]),
                    "end": float(raw["end"]),
                    "quote": float(raw["quote"]),
                })
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return rows
