"""JSON model and instrument files.

A model file describes one economy: a shared driver and the markets that
live on it.

.. code-block:: json

    {"family": "rational_mult",
     "driver": {"dim": 2},
     "markets": [{"label": "x", "params": {"curve": {"flat_rate": 0.03},
                                         "factors": [{"driver": 0, "vol": 0.3,
                                                      "b": {"level": 0.5, "decay": 0.1}}]}},
                 {"label": "y", "params": {"curve": {"flat_rate": 0.04}}}]}

A single market may be given as ``{"family", "label", "params"}``. Curves
are referenced as ``{"flat_rate": r}``, ``{"path": "file.json"}`` (relative
to the model file) or inline pillars ``{"pillars": [{"t", "df"}, ...]}``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .hjm import GaussianHjmDriver, GaussianHjmModel
from .kernels import (AdditiveRationalModel, BrownianDriver, Economy, ExpDecay, ExponentialMartingale,
                      RationalFactor, RationalMultiplicativeModel)
from .lrts import LrtsModel, SquareRootDriver
from .term import Curve

FAMILIES = ("rational_mult", "rational_add", "lrts", "hjm_gauss", "deterministic")


def _read(source):
    if isinstance(source, dict):
        return source, Path.cwd()
    path = Path(source)
    return json.loads(path.read_text()), path.resolve().parent


def load_curve(ref, base: Path | None = None, label: str = "") -> Curve:
    base = base or Path.cwd()
    if isinstance(ref, (str, Path)):
        ref = {"path": str(ref)}
    if not isinstance(ref, dict):
        raise ValueError(f"curve reference must be an object, got {ref!r}")
    if "flat_rate" in ref:
        return Curve.flat(float(ref["flat_rate"]), label or ref.get("label", "flat"))
    if "path" in ref:
        path = Path(ref["path"])
        curve = Curve.load(path if path.is_absolute() else base / path)
    elif "pillars" in ref:
        curve = Curve.from_dict({"label": ref.get("label", label), **ref})
    else:
        raise ValueError(f"curve reference needs flat_rate, path or pillars: {ref!r}")
    return curve.with_label(label) if label else curve


def _loading(spec):
    if isinstance(spec, (int, float)):
        return ExpDecay(float(spec), 0.0)
    return ExpDecay.from_config(spec)


def _markets(cfg):
    if "markets" in cfg:
        markets = cfg["markets"]
    elif "label" in cfg:
        markets = [{"label": cfg["label"], "params": cfg.get("params", {})}]
    else:
        raise ValueError("model file needs 'markets' or a single 'label'")
    labels = [m["label"] for m in markets]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate market labels {labels}")
    return markets


def _rational_mult(cfg, base):
    markets = _markets(cfg)
    coords = [f.get("driver", 0) for m in markets for f in m["params"].get("factors", [])]
    dim = int(cfg.get("driver", {}).get("dim", max(coords, default=-1) + 1))
    driver = BrownianDriver(dim)
    out = {}
    for m in markets:
        p = m["params"]
        factors = [RationalFactor(_loading(f["b"]),
                                  ExponentialMartingale(int(f.get("driver", 0)), float(f["vol"]),
                                                        float(f.get("compensator_shift", 0.0))))
                   for f in p.get("factors", [])]
        out[m["label"]] = RationalMultiplicativeModel(m["label"], load_curve(p["curve"], base, m["label"]),
                                                      factors, driver)
    return driver, out


class _VectorMartingale:
    def __init__(self, parts):
        self.parts = parts

    def value(self, state, t):
        return np.stack([np.asarray(p.value(state, t)) for p in self.parts], axis=-1)


class _VectorLoading:
    def __init__(self, parts):
        self.parts = parts

    def __call__(self, t):
        return np.array([p(t) for p in self.parts])


def _rational_add(cfg, base):
    markets = _markets(cfg)
    dim = int(cfg.get("driver", {}).get("dim", 1))
    driver = BrownianDriver(dim)
    out = {}
    for m in markets:
        p = m["params"]
        terms = p.get("terms", [{"b": p.get("b", 0.0), "driver": p.get("driver", 0), "vol": p.get("vol", 0.0),
                                 "compensator_shift": p.get("compensator_shift", 0.0)}])
        mart = _VectorMartingale([ExponentialMartingale(int(t.get("driver", 0)), float(t["vol"]),
                                                        float(t.get("compensator_shift", 0.0))) for t in terms])
        b = _VectorLoading([_loading(t["b"]) for t in terms])
        out[m["label"]] = AdditiveRationalModel(m["label"], load_curve(p["curve"], base, m["label"]), b, mart,
                                                driver)
    return driver, out


def _lrts(cfg, base):
    d = cfg.get("driver")
    if d is None:
        raise ValueError("lrts model needs a square-root driver block")
    driver = SquareRootDriver(d["kappa"], d["theta"], d["sigma"], d["z0"], d.get("drift_shift", 0.0),
                              d.get("max_dt", 1.0 / 500))
    out = {}
    for m in _markets(cfg):
        p = m["params"]
        out[m["label"]] = LrtsModel(m["label"], p["alpha"], p["phi"], p["psi"], driver)
    return driver, out


def _hjm(cfg, base):
    d = cfg.get("driver")
    if d is None:
        raise ValueError("hjm_gauss model needs a driver block with kappa")
    driver = GaussianHjmDriver(d["kappa"])
    out = {}
    for m in _markets(cfg):
        p = m["params"]
        out[m["label"]] = GaussianHjmModel(m["label"], load_curve(p["curve"], base, m["label"]),
                                           p.get("sigma", 0.0), p.get("lambda", 0.0), driver,
                                           p.get("drift_shift", 0.0))
    return driver, out


def load_economy(source) -> Economy:
    """Build an :class:`Economy` from a model file path or an already-parsed dict."""
    cfg, base = _read(source)
    family = cfg.get("family")
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    builder = {"rational_mult": _rational_mult, "deterministic": _rational_mult,
               "rational_add": _rational_add, "lrts": _lrts, "hjm_gauss": _hjm}[family]
    driver, markets = builder(cfg, base)
    return Economy(driver, markets, family, cfg)


def economy_from_curves(curves) -> Economy:
    cfg = {"family": "deterministic",
           "markets": [{"label": c.label, "params": {"curve": c.to_dict()}} for c in curves]}
    return load_economy(cfg)
