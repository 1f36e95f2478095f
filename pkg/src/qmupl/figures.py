"""Deterministic spread curves in SI units.

sigma(t) carries no noise dependence, so every figure is one extended-precision
evaluation per (gamma, t): no Monte Carlo, and runs finish in seconds.
Each experiment writes ``<name>.csv``, a ``<name>.meta.json`` sidecar with
every input needed to regenerate it, and a Vega-Lite ``<name>.vl.json``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from types import MappingProxyType
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import alpha_si, sigma_si
from .noise import write_columns
from .params import LAMBDA0_ADLER, LAMBDA0_GRW, NUCLEON_MASS, Exponential, PhysicalParams, White


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str  # "time" (sigma vs t per gamma) or "gamma" (sigma at one t vs gamma)
    mass: float
    lambda0: float
    sigma0: float = 1.0
    gammas: tuple = ()
    times: tuple = ()
    t_eval: Optional[float] = None
    log_time: bool = False
    threshold: Optional[float] = None  # localization target for "gamma" sweeps (m)
    overrides: dict = field(default_factory=dict)

    @property
    def params(self):
        return PhysicalParams(mass=self.mass, lambda0=self.lambda0, m0=NUCLEON_MASS)


def _omega(mass, lambda0):
    return PhysicalParams(mass=mass, lambda0=lambda0, m0=NUCLEON_MASS).omega


def _gamma_sweep(mass, lambda0, n=41):
    w = _omega(mass, lambda0)
    return tuple(np.logspace(math.log10(1e-2 * w), math.log10(1e3 * w), n))


PRESETS = MappingProxyType({
    "fig1": ExperimentSpec("fig1", "time", 1.0, LAMBDA0_GRW,
                           gammas=(1e22, 1e23, 1e24, 1e25),
                           times=tuple(np.linspace(0.0, 1e-23, 101))),
    "fig2": ExperimentSpec("fig2", "time", 1.0, LAMBDA0_GRW,
                           gammas=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2),
                           times=tuple(np.logspace(0, 6, 61)), log_time=True),
    "fig3": ExperimentSpec("fig3", "gamma", 1.01e-3, LAMBDA0_GRW, gammas=_gamma_sweep(1.01e-3, LAMBDA0_GRW),
                           t_eval=1e-3, threshold=1e-7),
    "fig4": ExperimentSpec("fig4", "gamma", 1.06e-18, LAMBDA0_ADLER, gammas=_gamma_sweep(1.06e-18, LAMBDA0_ADLER),
                           t_eval=3.33e-2, threshold=1e-7),
})

_FLOAT_KEYS = {"mass", "lambda0", "sigma0", "t_eval", "threshold"}
_TUPLE_KEYS = {"gammas", "times"}


def with_overrides(spec, overrides):
    """Copy of a preset with overrides applied and recorded (presets stay untouched)."""
    clean = {}
    for key, val in overrides.items():
        if key in _FLOAT_KEYS:
            clean[key] = float(val)
        elif key in _TUPLE_KEYS:
            clean[key] = tuple(float(v) for v in val)
        elif key == "log_time":
            clean[key] = bool(val)
        else:
            raise KeyError(f"unknown override {key!r}")
    return replace(spec, **clean, overrides={**spec.overrides, **clean})


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    columns: dict
    summary: dict


def _time_curves(spec):
    p = spec.params
    t = np.asarray(spec.times)
    cols = {"t": t, "sigma_white": sigma_si(p, White(), t, spec.sigma0)}
    for g in spec.gammas:
        cols[f"sigma_gamma_{g:.3g}"] = sigma_si(p, Exponential(g), t, spec.sigma0)
    alpha_inf = math.sqrt(p.lam * p.mass / (2 * p.hbar)) * math.cos(math.pi / 4)
    summary = {"omega": p.omega, "sigma_inf_white": 1 / (2 * math.sqrt(alpha_inf))}
    return cols, summary


def _bisect_threshold(spec, lo, hi, iters=40):
    """Smallest gamma (log-bisection) with sigma(t_eval) below the threshold."""
    p = spec.params

    def below(g):
        return sigma_si(p, Exponential(g), [spec.t_eval], spec.sigma0)[0] < spec.threshold

    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        lo, hi = (lo, mid) if below(mid) else (mid, hi)
    return hi


def _gamma_curve(spec):
    p = spec.params
    g = np.asarray(spec.gammas)
    sig = np.array([sigma_si(p, Exponential(x), [spec.t_eval], spec.sigma0)[0] for x in g])
    white = sigma_si(p, White(), [spec.t_eval], spec.sigma0)[0]
    cols = {"gamma": g, "sigma": sig, "sigma_white": np.full_like(g, white)}
    summary = {"omega": p.omega, "t_eval": spec.t_eval, "sigma_white": white}
    if spec.threshold is not None:
        ok = sig < spec.threshold
        summary["threshold"] = spec.threshold
        if ok.any() and not ok.all():
            i = int(np.argmax(ok))
            summary["gamma_threshold"] = _bisect_threshold(spec, g[i - 1], g[i])
        else:
            summary["gamma_threshold"] = float(g[0]) if ok.all() else None
    return cols, summary


def run_experiment(spec):
    cols, summary = _time_curves(spec) if spec.kind == "time" else _gamma_curve(spec)
    return ExperimentResult(spec, cols, summary)


def _vega_lite(spec, result, csv_name):
    if spec.kind == "time":
        x = {"field": "t", "type": "quantitative", "title": "t (s)"}
        if spec.log_time:
            x["scale"] = {"type": "log"}
        return {
            "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
            "data": {"url": csv_name, "format": {"type": "csv"}},
            "transform": [{"fold": [k for k in result.columns if k != "t"], "as": ["curve", "sigma"]}],
            "mark": "line",
            "encoding": {"x": x, "y": {"field": "sigma", "type": "quantitative", "title": "sigma (m)"},
                         "color": {"field": "curve", "type": "nominal"}},
        }
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "data": {"url": csv_name, "format": {"type": "csv"}},
        "layer": [
            {"mark": "line", "encoding": {
                "x": {"field": "gamma", "type": "quantitative", "scale": {"type": "log"}, "title": "gamma (1/s)"},
                "y": {"field": "sigma", "type": "quantitative", "scale": {"type": "log"}, "title": "sigma (m)"}}},
            {"mark": {"type": "line", "strokeDash": [4, 4]}, "encoding": {
                "x": {"field": "gamma", "type": "quantitative"}, "y": {"field": "sigma_white", "type": "quantitative"}}},
        ],
    }


def write_experiment(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    spec = result.spec
    csv_name = f"{spec.name}.csv"
    names = list(result.columns)
    write_columns(os.path.join(out_dir, csv_name), names, [result.columns[n] for n in names])
    meta = {"experiment": spec.name, "code_version": __version__,
            "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
            "physical": {"mass_kg": spec.mass, "lambda0": spec.lambda0, "m0_kg": NUCLEON_MASS,
                         "hbar": spec.params.hbar, "lambda": spec.params.lam},
            "summary": result.summary, "seed": None,
            "note": "deterministic: the spread does not depend on the noise realization"}
    with open(os.path.join(out_dir, f"{spec.name}.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=float)
    with open(os.path.join(out_dir, f"{spec.name}.vl.json"), "w") as fh:
        json.dump(_vega_lite(spec, result, csv_name), fh, indent=2)
    return [os.path.join(out_dir, f) for f in (csv_name, f"{spec.name}.meta.json", f"{spec.name}.vl.json")]
