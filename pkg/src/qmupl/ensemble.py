"""Monte Carlo over noise realizations.

Two evolutions share the same Gaussian noise law:

* ``collapse`` (xi = 1): the linear equation, averaged under the noise law
  with weight |phi|^2.  Each recorded time needs its own boundary problem on
  [0, t]; coefficients come from the exact discrete Gaussian integral.
* ``unitary`` (xi = i): a random linear potential.  The Gaussian keeps the
  free alpha_t and beta_t = beta_free + 2 alpha_free X + i P / hbar with
  P = hbar sqrt(lam) int w and X = int P / m.

Density matrices from both agree in expectation; pathwise states do not.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .bvp import assemble_system
from .dynamics import NonNormalizableError, discrete_coefficients, free_alpha, propagate_batch
from .noise import sample_paths, write_columns
from .params import Exponential, Tabulated, TimeGrid, White

MAX_FLAGGED_FRACTION = 1e-3


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    kernel: object
    t_final: float
    n_steps: int
    n_paths: int
    seed: int = 0
    alpha0: complex = 0.5
    beta0: complex = 0j
    xi_mode: str = "unitary"  # or "collapse"
    lam: float = 0.25
    mass: float = 1.0
    hbar: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.xi_mode not in ("unitary", "collapse"):
            raise ValueError("xi_mode must be 'unitary' or 'collapse'")
        if not np.real(self.alpha0) > 0:
            raise ValueError("initial Re alpha must be positive")
        if self.record_every < 1 or self.n_steps % self.record_every:
            raise ValueError("record_every must divide n_steps")

    @property
    def grid(self):
        return TimeGrid(self.t_final, self.n_steps)

    @property
    def record_index(self):
        return np.arange(0, self.n_steps + 1, self.record_every)


def _gamma_normalized(alpha, beta):
    """Real part of gamma that makes exp(-alpha x^2 + beta x + gamma) unit-norm."""
    a_r = np.real(alpha)
    return -0.25 * np.log(math.pi / (2 * a_r)) - np.real(beta) ** 2 / (4 * a_r)


@dataclass
class PathStates:
    """alpha (n_times,), beta and log |phi|^2 (n_paths, n_times)."""

    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    log_norm2: np.ndarray
    flagged: np.ndarray  # bool per path

    def observables(self, mass, hbar):
        a = self.alpha[None, :]
        b = self.beta
        q = b.real / (2 * a.real)
        p = hbar * (b.imag - a.imag / a.real * b.real)
        var_p = hbar**2 * np.abs(a) ** 2 / a.real
        energy = (p**2 + var_p) / (2 * mass)
        return q, p, energy

    def gaussian_values(self, x, time_index):
        """phi(x) per path at one recorded time, with the |phi|^2 weight built in."""
        a = self.alpha[time_index]
        b = self.beta[:, time_index][:, None]
        g = (_gamma_normalized(a, b[:, 0]) + 0.5 * self.log_norm2[:, time_index])[:, None]
        x = np.asarray(x)[None, :]
        return np.exp(-a * x**2 + b * x + g)


def _unitary_states(cfg, W):
    grid = cfg.grid
    s = grid.nodes
    P = cfg.hbar * math.sqrt(cfg.lam) * cumulative_trapezoid(W, dx=grid.eps, axis=1, initial=0)
    X = cumulative_trapezoid(P, dx=grid.eps, axis=1, initial=0) / cfg.mass
    idx = cfg.record_index
    t = s[idx]
    a_f = free_alpha(complex(cfg.alpha0), t, cfg.mass, cfg.hbar)
    b_f = complex(cfg.beta0) * a_f / complex(cfg.alpha0)
    beta = b_f[None, :] + 2 * a_f[None, :] * X[:, idx] + 1j * P[:, idx] / cfg.hbar
    return PathStates(t, a_f, beta, np.zeros(beta.shape), np.zeros(W.shape[0], bool))


def _collapse_states(cfg, W):
    grid = cfg.grid
    idx = cfg.record_index
    n = W.shape[0]
    alpha = np.empty(idx.size, complex)
    beta = np.empty((n, idx.size), complex)
    logw = np.zeros((n, idx.size))
    a0, b0 = complex(cfg.alpha0), complex(cfg.beta0)
    g0 = _gamma_normalized(a0, b0)
    for j, k in enumerate(idx):
        if k == 0:
            alpha[j], beta[:, j] = a0, b0
            continue
        if k < 3:
            raise EnsembleError("collapse mode needs at least 3 steps before the first recorded time")
        sub = grid.prefix(int(k))
        system = assemble_system(cfg.kernel, sub, cfg.lam, cfg.mass, cfg.hbar)
        co = discrete_coefficients(system, W[:, : k + 1])
        alpha[j], beta[:, j], logw[:, j] = propagate_batch(a0, b0, g0, co)
    flagged = ~np.all(np.isfinite(beta) & np.isfinite(logw), axis=1)
    return PathStates(grid.nodes[idx], alpha, beta, logw, flagged)


def simulate_paths(cfg, start=0):
    """Sample noises and evolve every path; returns PathStates."""
    W = sample_paths(cfg.kernel, cfg.grid, cfg.seed, cfg.n_paths, start=start)
    if cfg.lam == 0:
        W = np.zeros_like(W)
    states = _unitary_states(cfg, W) if cfg.xi_mode == "unitary" else _collapse_states(cfg, W)
    n_bad = int(states.flagged.sum())
    if n_bad > MAX_FLAGGED_FRACTION * cfg.n_paths:
        raise EnsembleError(f"{n_bad} of {cfg.n_paths} paths failed to propagate")
    return states


@dataclass
class EnsembleReport:
    times: np.ndarray
    sigma: np.ndarray
    mean_q: np.ndarray
    se_q: np.ndarray
    mean_p: np.ndarray
    se_p: np.ndarray
    mean_energy: np.ndarray
    se_energy: np.ndarray
    fluct_q: np.ndarray  # ensemble std of <q>
    fluct_p: np.ndarray
    mean_weight: np.ndarray
    ess_fraction: np.ndarray
    n_paths: int
    n_flagged: int
    config: dict = field(default_factory=dict)

    def to_json(self, path):
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, default=str)

    def to_csv(self, path):
        names = ["t", "sigma", "mean_q", "se_q", "mean_p", "se_p", "mean_energy", "se_energy",
                 "fluct_q", "fluct_p", "mean_weight", "ess_fraction"]
        write_columns(path, names, [getattr(self, "times" if n == "t" else n) for n in names])


def _weighted_stats(values, weights):
    """Mean and standard error of weights * values over axis 0."""
    wv = weights * values
    n = wv.shape[0]
    return wv.mean(axis=0), wv.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(wv.shape[1])


def _weighted_std(values, weights):
    wn = weights / weights.mean(axis=0)
    m = (wn * values).mean(axis=0)
    return np.sqrt((wn * (values - m) ** 2).mean(axis=0))


def _config_dict(cfg):
    d = asdict(cfg)
    d["kernel"] = repr(cfg.kernel)
    d["alpha0"], d["beta0"] = str(cfg.alpha0), str(cfg.beta0)
    return d


def run_ensemble(cfg):
    st = simulate_paths(cfg)
    keep = ~st.flagged
    q, p, energy = st.observables(cfg.mass, cfg.hbar)
    q, p, energy = q[keep], p[keep], energy[keep]
    w = np.exp(st.log_norm2[keep])
    mq, sq = _weighted_stats(q, w)
    mp, sp = _weighted_stats(p, w)
    me, se = _weighted_stats(energy, w)
    ess = w.sum(axis=0) ** 2 / (w**2).sum(axis=0) / w.shape[0]
    return EnsembleReport(st.times, 1 / (2 * np.sqrt(st.alpha.real)), mq, sq, mp, sp, me, se,
                          _weighted_std(q, w), _weighted_std(p, w), w.mean(axis=0), ess,
                          cfg.n_paths, int(st.flagged.sum()), _config_dict(cfg))


def analytic_energy(kernel, t, lam=0.25, mass=1.0, hbar=1.0):
    """E[<H0>_t] - <H0>_0 = (lam hbar^2 / 2m) int_0^t int_0^t D(s, r) dr ds."""
    t = np.asarray(t, dtype=float)
    pref = lam * hbar**2 / (2 * mass)
    if isinstance(kernel, White):
        return pref * t
    if isinstance(kernel, Exponential):
        g = kernel.gamma
        return pref * (t + np.expm1(-g * t) / g)
    if isinstance(kernel, Tabulated):
        out = []
        for ti in np.atleast_1d(t):
            if ti <= 0:
                out.append(0.0)
                continue
            s = np.linspace(0.0, ti, 201)
            Dm = kernel(s[:, None], s[None, :])
            out.append(trapezoid(trapezoid(Dm, s, axis=1), s))
        return pref * np.asarray(out).reshape(t.shape)
    raise TypeError(f"no energy formula for {kernel!r}")


# --- density matrices ------------------------------------------------------

@dataclass
class DensityEstimate:
    x: np.ndarray
    rho: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    n_paths: int


def density_matrix(states, x, time_index=-1, chunk=1000):
    """rho(x, x') = mean over paths of phi(x) phi*(x'), with per-entry standard errors."""
    n = states.beta.shape[0]
    k = x.size
    s_re = np.zeros((k, k)); s_im = np.zeros((k, k))
    s2_re = np.zeros((k, k)); s2_im = np.zeros((k, k))
    for lo in range(0, n, chunk):
        phi = _chunk_values(states, x, time_index, lo, lo + chunk)
        prod = phi[:, :, None] * phi.conj()[:, None, :]
        s_re += prod.real.sum(0); s_im += prod.imag.sum(0)
        s2_re += (prod.real**2).sum(0); s2_im += (prod.imag**2).sum(0)
    m_re, m_im = s_re / n, s_im / n
    if n > 1:
        se_re = np.sqrt(np.clip(s2_re / n - m_re**2, 0, None) / (n - 1))
        se_im = np.sqrt(np.clip(s2_im / n - m_im**2, 0, None) / (n - 1))
    else:  # undefined for a single path
        se_re = se_im = np.full((k, k), np.nan)
    return DensityEstimate(x, m_re + 1j * m_im, se_re, se_im, n)


def _chunk_values(states, x, time_index, lo, hi):
    sub = PathStates(states.times, states.alpha, states.beta[lo:hi], states.log_norm2[lo:hi],
                     states.flagged[lo:hi])
    return sub.gaussian_values(x, time_index)


@dataclass
class ImaginaryNoiseComparison:
    x: np.ndarray
    collapse: DensityEstimate
    unitary: DensityEstimate
    max_deviation: float  # in combined standard errors, over Re and Im parts
    trace_collapse: float
    trace_se_collapse: float
    ess_fraction: float

    def passed(self, limit=4.0):
        return self.max_deviation < limit


def _z_scores(diff, se, tiny):
    """|diff| / se; agreement to rounding scores 0, a real gap with zero spread scores inf."""
    diff = np.abs(diff)
    out = np.full(diff.shape, np.inf)
    np.divide(diff, se, out=out, where=se > 0)
    out[diff <= tiny] = 0.0
    return out


def imaginary_noise_compare(cfg, x=None, n_x=41, width=3.0):
    """Density matrices at the final time from xi = 1 and xi = i with matched seeds."""
    collapse = simulate_paths(replace(cfg, record_every=cfg.n_steps, xi_mode="collapse"))
    unitary = simulate_paths(replace(cfg, record_every=cfg.n_steps, xi_mode="unitary"))
    if x is None:
        q, _, _ = unitary.observables(cfg.mass, cfg.hbar)
        a = unitary.alpha[-1]
        spread = math.sqrt(1 / (4 * a.real) + q[:, -1].var())
        centre = float(q[:, -1].mean())
        x = centre + np.linspace(-width * spread, width * spread, n_x)
    rc = density_matrix(collapse, x)
    ru = density_matrix(unitary, x)
    tiny = 1e-12 * np.abs(ru.rho).max()
    d_re = _z_scores(rc.rho.real - ru.rho.real, np.hypot(rc.se_re, ru.se_re), tiny)
    d_im = _z_scores(rc.rho.imag - ru.rho.imag, np.hypot(rc.se_im, ru.se_im), tiny)
    w = np.exp(collapse.log_norm2[:, -1])
    dev = float(np.max(np.r_[d_re.ravel(), d_im.ravel()]))
    return ImaginaryNoiseComparison(x, rc, ru, dev, float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size)),
                                    float(w.sum() ** 2 / (w**2).sum() / w.size))


# --- mass scaling ----------------------------------------------------------

@dataclass
class ScalingFit:
    masses: np.ndarray
    fluct_q: np.ndarray
    fluct_p: np.ndarray
    slope_q: float
    slope_p: float
    slope_v: float
    slope_se: float


def variance_scaling(cfg, masses, lambda0=None, m0=1.0, time_index=-1):
    """Fit log-fluctuations of <q>, <p> and <p>/m against log m.

    Each mass runs with lam = (m / m0) lambda0 and an independent seed stream.
    """
    masses = np.asarray(masses, dtype=float)
    if masses.size < 2:
        raise ValueError("need at least two masses")
    lambda0 = cfg.lam if lambda0 is None else lambda0
    fq, fp = [], []
    for i, m in enumerate(masses):
        c = replace(cfg, mass=m, lam=m / m0 * lambda0, seed=cfg.seed + i,
                    alpha0=cfg.alpha0 * m / m0, record_every=cfg.n_steps)
        r = run_ensemble(c)
        fq.append(r.fluct_q[time_index]); fp.append(r.fluct_p[time_index])
    lm = np.log(masses)
    slope_q = np.polyfit(lm, np.log(fq), 1)[0]
    slope_p = np.polyfit(lm, np.log(fp), 1)[0]
    slope_v = np.polyfit(lm, np.log(np.asarray(fp) / masses), 1)[0]
    # each log-std carries an error of about 1/sqrt(2n)
    se = 1 / math.sqrt(2 * cfg.n_paths * np.sum((lm - lm.mean()) ** 2))
    return ScalingFit(masses, np.array(fq), np.array(fp), float(slope_q), float(slope_p), float(slope_v), se)
