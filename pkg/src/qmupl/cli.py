"""Command-line entry point: ``qmupl <command> [options]``.

Exit status: 0 ok, 1 validation failure, 2 configuration or I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .noise import estimate_correlation, sample_paths, write_columns
from .params import TimeGrid

log = logging.getLogger("qmupl")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
NOISE_TEST_LIMIT = 5.0  # max |deviation| in standard errors over all covariance entries


def _write_sidecar(path, payload):
    with open(path + ".meta.json", "w") as fh:
        json.dump({"code_version": __version__, **payload}, fh, indent=2, default=str)


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")


def _config(args):
    return load_config(args.config, seed=args.seed, n_paths=args.paths, n_steps=args.grid)


def _ensemble_config(cfg: RunConfig, xi_mode=None):
    from .ensemble import EnsembleConfig

    _, kern, t, a0, b0, lam = cfg.natural()
    return EnsembleConfig(kern, t, cfg.n_steps, cfg.n_paths, seed=cfg.seed, alpha0=a0, beta0=b0,
                          xi_mode=xi_mode or cfg.xi_mode, lam=lam, record_every=cfg.auto_record_every)


def cmd_simulate(args):
    """One collapse-mode trajectory for the configured noise seed."""
    from .ensemble import simulate_paths

    cfg = _config(args)
    sc = cfg.natural()[0]
    ecfg = _ensemble_config(cfg, "collapse")
    ecfg = replace(ecfg, n_paths=1)
    st = simulate_paths(ecfg)
    q, p, _ = st.observables(1.0, 1.0)
    t, a, b = st.times, st.alpha, st.beta[0]
    sigma = 1 / (2 * np.sqrt(a.real))
    cols = [t, sigma, q[0], p[0], a.real, a.imag, b.real, b.imag]
    if sc is not None:
        cols = [sc.t_si(t), sc.x_si(sigma), sc.x_si(q[0]), sc.momentum_si(p[0]),
                sc.alpha_si(a.real), sc.alpha_si(a.imag), sc.beta_si(b.real), sc.beta_si(b.imag)]
    _ensure_dir(args.out)
    path = os.path.join(args.out, "trajectory.csv")
    write_columns(path, ["t", "sigma", "mean_q", "mean_p", "alpha_re", "alpha_im", "beta_re", "beta_im"], cols)
    _write_sidecar(path, {"command": "simulate", "config": asdict(cfg), "log_norm2_final": float(st.log_norm2[0, -1])})
    print(path)
    return EXIT_OK


def cmd_ensemble(args):
    from .ensemble import analytic_energy, run_ensemble

    cfg = _config(args)
    ecfg = _ensemble_config(cfg)
    report = run_ensemble(ecfg)
    _ensure_dir(args.out)
    csv = os.path.join(args.out, "ensemble.csv")
    report.to_csv(csv)
    report.to_json(os.path.join(args.out, "ensemble.json"))
    exact = analytic_energy(ecfg.kernel, report.times, ecfg.lam)
    _write_sidecar(csv, {"command": "ensemble", "config": asdict(cfg), "units": "natural",
                         "analytic_energy_gain": exact.tolist()})
    print(csv)
    return EXIT_OK


def cmd_figure(args):
    from .figures import PRESETS, run_experiment, with_overrides, write_experiment

    if args.name not in PRESETS:
        raise ConfigError(f"unknown figure {args.name!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[args.name]
    if args.set:
        over = {}
        for item in args.set:
            key, _, val = item.partition("=")
            over[key.strip()] = [v for v in val.split(",")] if key.strip() in ("gammas", "times") else val
        try:
            spec = with_overrides(spec, over)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid override: {exc}") from exc
    _ensure_dir(args.out)
    for path in write_experiment(run_experiment(spec), args.out):
        print(path)
    return EXIT_OK


def cmd_validate(args):
    from .validation import run_all

    only = {int(x) for x in args.only.split(",")} if args.only else None
    results = run_all(inject_asymmetry=args.inject_asymmetry, only=only)
    for r in results:
        print(r.line(), flush=True)
    if args.out:
        _ensure_dir(args.out)
        with open(os.path.join(args.out, "validation.json"), "w") as fh:
            json.dump([r.as_dict() for r in results], fh, indent=2, default=str)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_noise_test(args):
    """Empirical covariance of sampled paths against the kernel matrix."""
    cfg = _config(args)
    _, kern, t, *_ = cfg.natural()
    n_steps = args.grid or 50
    grid = TimeGrid(t, n_steps)
    W = sample_paths(kern, grid, cfg.seed, args.paths or 2000)
    est = estimate_correlation(W, kern.matrix(grid))
    ok = est.max_deviation < NOISE_TEST_LIMIT
    print(f"[{'PASS' if ok else 'FAIL'}] noise covariance: max deviation {est.max_deviation:.2f} SE "
          f"(allowed {NOISE_TEST_LIMIT}) over {(n_steps + 1) ** 2} entries, {est.n_paths} paths")
    if args.out:
        _ensure_dir(args.out)
        path = os.path.join(args.out, "noise_test.json")
        with open(path, "w") as fh:
            json.dump({"max_deviation_se": est.max_deviation, "limit": NOISE_TEST_LIMIT, "n_paths": est.n_paths,
                       "kernel": repr(kern), "seed": cfg.seed, "n_steps": n_steps, "t_final": t}, fh, indent=2)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--paths", type=int, help="number of noise paths")
    common.add_argument("--grid", type=int, help="number of time steps")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="qmupl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="single trajectory").set_defaults(func=cmd_simulate)
    sub.add_parser("ensemble", parents=[common], help="Monte Carlo ensemble").set_defaults(func=cmd_ensemble)
    fig = sub.add_parser("figure", parents=[common], help="deterministic spread curves")
    fig.add_argument("name", help="fig1, fig2, fig3 or fig4")
    fig.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a preset field")
    fig.set_defaults(func=cmd_figure)
    val = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    val.add_argument("--only", help="comma-separated criterion numbers")
    val.add_argument("--inject-asymmetry", action="store_true", help="negative test: break kernel symmetry")
    val.set_defaults(func=cmd_validate, out=None)
    sub.add_parser("noise-test", parents=[common], help="check sampled noise covariance").set_defaults(
        func=cmd_noise_test, out=None)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
