"""Gaussian noise paths on a uniform time grid.

Per-path seeds are derived from a master seed with a counter split:
``SeedSequence(master, spawn_key=(index,))``.  The state of path ``i`` never
depends on how many other paths were drawn, or in which order, so ensembles
are reproducible across serial and parallel runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg, signal

from .params import Exponential, Tabulated, TimeGrid, White


@dataclass(frozen=True, eq=False)
class NoisePath:
    grid: TimeGrid
    values: np.ndarray
    seed: Optional[int] = None
    kernel: str = ""
    # exact callables, only for smooth analytic test noises
    func: Optional[Callable] = None
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None

    @property
    def smooth(self):
        return self.d2 is not None

    @property
    def t(self):
        return self.grid.nodes

    def prefix(self, n):
        """Restriction to the first ``n`` steps of the grid."""
        return NoisePath(self.grid.prefix(n), self.values[: n + 1], self.seed, self.kernel,
                         self.func, self.d1, self.d2)

    def to_csv(self, path):
        write_columns(path, ["t", "w"], [self.t, self.values])


def write_columns(path, names, columns):
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def path_seed(master_seed, index):
    """64-bit seed of path ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _draw(kernel, grid, xi):
    """Map standard normals (..., N+1) onto a path with the kernel's covariance."""
    if isinstance(kernel, White):
        return xi / np.sqrt(grid.eps)
    if isinstance(kernel, Exponential):
        g = kernel.gamma
        rho = np.exp(-g * grid.eps)
        x = xi * np.sqrt(0.5 * g * -np.expm1(-2 * g * grid.eps))
        x[..., 0] = xi[..., 0] * np.sqrt(0.5 * g)
        return signal.lfilter([1.0], [1.0, -rho], x, axis=-1)
    if isinstance(kernel, Tabulated):
        return xi @ _cov_sqrt(kernel, grid).T
    raise TypeError(f"unsupported kernel {kernel!r}")


_SQRT_CACHE = {}


def _cov_sqrt(kernel, grid):
    key = (id(kernel), grid.t_final, grid.n_steps)
    if key in _SQRT_CACHE:
        return _SQRT_CACHE[key]
    cov = kernel.matrix(grid)
    try:
        root = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        vals, vecs = linalg.eigh(cov)
        if vals.min() < -1e-10 * abs(vals).max():
            raise linalg.LinAlgError(f"covariance is not PSD (min eigenvalue {vals.min():.3g})")
        root = vecs * np.sqrt(np.clip(vals, 0, None))
    if len(_SQRT_CACHE) > 16:
        _SQRT_CACHE.clear()
    _SQRT_CACHE[key] = root
    return root


def sample_path(kernel, grid, seed):
    """One path with E[w_k w_j] = D(t_k, t_j) (white: delta_kj / eps).

    The exponential kernel uses the exact AR(1) recursion
    w_{k+1} = rho w_k + sqrt(gamma/2 (1 - rho^2)) xi_k with rho = exp(-gamma eps)
    started from the stationary law, so every lag covariance is exact.
    """
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(grid.n_steps + 1)
    return NoisePath(grid, _draw(kernel, grid, xi), seed=seed, kernel=kernel.name)


def sample_paths(kernel, grid, master_seed, n_paths, start=0):
    """Array (n_paths, N+1); row i equals ``sample_path(..., path_seed(master, start+i))``."""
    xi = np.empty((n_paths, grid.n_steps + 1))
    for i in range(n_paths):
        xi[i] = np.random.default_rng(path_seed(master_seed, start + i)).standard_normal(grid.n_steps + 1)
    return _draw(kernel, grid, xi)


@dataclass
class CorrelationEstimate:
    cov: np.ndarray
    stderr: np.ndarray
    n_paths: int
    max_deviation: Optional[float] = None  # in standard-error units


def estimate_correlation(paths, target=None):
    """Unbiased sample covariance across paths, with per-entry standard errors.

    ``paths`` is an (n, N+1) array or a sequence of :class:`NoisePath` on one
    grid.  If ``target`` (an (N+1, N+1) matrix) is given, the largest
    deviation from it in standard-error units is reported.
    """
    if not isinstance(paths, np.ndarray):
        paths = list(paths)
        grids = {(p.grid.t_final, p.grid.n_steps) for p in paths}
        if len(grids) > 1:
            raise ValueError("paths live on different grids")
        paths = np.array([p.values for p in paths])
    x = np.asarray(paths, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two paths in an (n, N+1) array")
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    x2 = xc**2
    fourth = x2.T @ x2 / n
    stderr = np.sqrt(np.clip(fourth - (cov * (n - 1) / n) ** 2, 0, None) / n)
    est = CorrelationEstimate(cov, stderr, n)
    if target is not None:
        target = np.asarray(target, dtype=float)
        if target.shape != cov.shape:
            raise ValueError(f"target shape {target.shape} != {cov.shape}")
        diff = np.abs(cov - target)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(stderr > 0, diff / stderr, np.where(diff > 0, np.inf, 0.0))
        est.max_deviation = float(z.max())
    return est


def smooth_test_noise(grid, kind="sinusoid", nu=1.0, amplitude=1.0, phase=0.0, coeffs=None):
    """Deterministic smooth 'noise' with exact first and second derivatives."""
    if kind == "sinusoid":
        def func(t):
            return amplitude * np.sin(nu * t + phase)

        def d1(t):
            return amplitude * nu * np.cos(nu * t + phase)

        def d2(t):
            return -nu**2 * func(t)
    elif kind == "polynomial":
        p = np.polynomial.Polynomial(coeffs if coeffs is not None else [1.0])
        func, d1, d2 = p, p.deriv(1), p.deriv(2)
    else:
        raise ValueError(f"unknown smooth noise kind {kind!r}")
    t = grid.nodes
    return NoisePath(grid, np.asarray(func(t), dtype=float) * np.ones_like(t), kernel=kind,
                     func=func, d1=d1, d2=d2)
