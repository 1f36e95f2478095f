"""Discretized boundary-value solver for the path-integral stationarity equation

    (i m / 2 hbar) z''(s) + lam * int_0^t D(s, r) z(r) dr = (sqrt(lam) / 2) w(s)

on a uniform grid.  Interior unknowns z_1..z_{N-1} satisfy A Z = Y with
A = B + C, B the scaled second-difference stencil and C = eps^2 lam D
(interior block).  The kernel integral uses the trapezoid rule, so the
endpoint columns of D enter Y with half weight.

The same factorization yields the propagator prefactor
u_N = det(A) / det(B), directly or through the resolvent
R(mu) = (B - mu C)^{-1} C / eps integrated over mu in [-1, 0].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .noise import NoisePath, write_columns
from .params import TimeGrid, White

COND_LIMIT = 1e12
RESIDUAL_RTOL = 1e-10


class WellPosednessError(RuntimeError):
    """The discrete system is singular or too badly conditioned to trust.

    For a real symmetric positive-semidefinite kernel the continuum problem
    has a unique solution, so this signals bad input or a degenerate grid.
    """


@dataclass(eq=False)
class DiscretizedSystem:
    grid: TimeGrid
    lam: float
    kernel_matrix: np.ndarray  # D on all N+1 nodes, real
    mass: float = 1.0
    hbar: float = 1.0
    _lu: Optional[tuple] = field(default=None, repr=False)
    _cond: Optional[float] = field(default=None, repr=False)

    @property
    def n(self):
        return self.grid.n_steps

    @property
    def eps(self):
        return self.grid.eps

    @property
    def k(self):
        return 1j * self.mass / (2 * self.hbar)

    @property
    def b_diag(self):
        return -1j * self.mass / (self.hbar * self.eps)

    @property
    def b_off(self):
        return 1j * self.mass / (2 * self.hbar * self.eps)

    @property
    def C(self):
        D = self.kernel_matrix[1:-1, 1:-1]
        return self.eps**2 * self.lam * D

    @property
    def B(self):
        m = self.n - 1
        return (np.diag(np.full(m, self.b_diag)) + np.diag(np.full(m - 1, self.b_off), 1)
                + np.diag(np.full(m - 1, self.b_off), -1))

    @property
    def A(self):
        A = self.C.astype(complex)
        idx = np.arange(self.n - 1)
        A[idx, idx] += self.b_diag
        A[idx[:-1], idx[:-1] + 1] += self.b_off
        A[idx[1:], idx[1:] - 1] += self.b_off
        return A

    def apply_A(self, Z):
        """A @ Z using the stencil plus the real kernel block (no dense A)."""
        Z = np.asarray(Z)
        # B = b_off * (second difference), since b_diag = -2 b_off exactly
        d2 = -2 * Z
        d2[1:] += Z[:-1]
        d2[:-1] += Z[1:]
        return self.C @ Z + self.b_off * d2

    @property
    def norm_A(self):
        """Cheap 1-norm bound |C|_1 + 4|b_off| (used for backward errors)."""
        return float(np.abs(self.C).sum(axis=0).max() + 4 * abs(self.b_off))

    def factor(self):
        if self._lu is None:
            A = self.A
            anorm = np.abs(A).sum(axis=0).max()
            lu, piv = linalg.lu_factor(A, overwrite_a=True, check_finite=False)
            if np.any(np.diag(lu) == 0):
                raise WellPosednessError("A is exactly singular (zero pivot in LU)")
            rcond, info = lapack.zgecon(lu, anorm, norm="1")
            self._cond = math.inf if rcond == 0 else 1.0 / rcond
            if not self._cond <= COND_LIMIT:  # also catches NaN from non-finite input
                raise WellPosednessError(
                    f"condition estimate {self._cond:.3g} exceeds {COND_LIMIT:.0e}; "
                    "a real symmetric PSD kernel should give a uniquely solvable problem")
            self._lu = (lu, piv)
        return self._lu

    @property
    def condition(self):
        self.factor()
        return self._cond

    def solve(self, Y):
        return linalg.lu_solve(self.factor(), Y, check_finite=False)

    def log_det_A(self):
        lu, piv = self.factor()
        d = np.diag(lu)
        swaps = np.count_nonzero(piv != np.arange(piv.size))
        return np.sum(np.log(d)) + (1j * math.pi if swaps % 2 else 0.0)

    def log_det_B(self):
        # det(B) = N (m / (2 i hbar eps))^(N-1)
        return math.log(self.n) + (self.n - 1) * np.log(self.mass / (2j * self.hbar * self.eps))


def assemble_system(kernel, grid, lam, mass=1.0, hbar=1.0):
    if grid.n_steps < 3:
        raise ValueError("need N >= 3 for a non-trivial interior")
    D = np.asarray(kernel.matrix(grid), dtype=float)
    return DiscretizedSystem(grid, float(lam), D, mass=mass, hbar=hbar)


# --- boundary problems -----------------------------------------------------

@dataclass(frozen=True)
class BoundaryProblem:
    left: complex = 0.0
    right: complex = 0.0
    noise: Optional[np.ndarray] = None
    label: str = "z"

    def __post_init__(self):
        if not (np.isfinite(self.left) and np.isfinite(self.right)):
            raise ValueError("boundary values must be finite")

    @classmethod
    def z(cls, noise, x0, x):
        return cls(x0, x, _values(noise), "z")

    @classmethod
    def f(cls):
        return cls(1.0, 0.0, None, "f")

    @classmethod
    def g(cls):
        return cls(0.0, 1.0, None, "g")

    @classmethod
    def h(cls, noise):
        return cls(0.0, 0.0, _values(noise), "h")


def _values(noise):
    if noise is None:
        return None
    return noise.values if isinstance(noise, NoisePath) else np.asarray(noise, dtype=float)


def build_rhs(system, problem):
    n, eps, lam = system.n, system.eps, system.lam
    Y = np.zeros(n - 1, dtype=complex)
    if problem.noise is not None:
        w = problem.noise
        if w.shape[-1] != n + 1:
            raise ValueError(f"noise has {w.shape[-1]} nodes, grid has {n + 1}")
        Y += eps * math.sqrt(lam) / 2 * w[1:-1]
    x0, x = problem.left, problem.right
    Y[0] -= system.b_off * x0
    Y[-1] -= system.b_off * x
    D = system.kernel_matrix
    Y -= eps**2 * lam / 2 * (D[1:-1, 0] * x0 + D[1:-1, -1] * x)
    return Y


@dataclass
class SampledSolution:
    grid: TimeGrid
    values: np.ndarray
    residual: float = 0.0
    rhs_norm: float = 0.0
    condition: float = float("nan")
    label: str = ""

    @property
    def t(self):
        return self.grid.nodes

    @property
    def d0(self):
        """z'(0) by the one-sided second-order stencil."""
        z, e = self.values, self.grid.eps
        return (-3 * z[0] + 4 * z[1] - z[2]) / (2 * e)

    @property
    def dt(self):
        """z'(t) by the one-sided second-order stencil."""
        z, e = self.values, self.grid.eps
        return (3 * z[-1] - 4 * z[-2] + z[-3]) / (2 * e)

    def derivative(self):
        return np.gradient(self.values, self.grid.eps, edge_order=2)

    def to_csv(self, path):
        write_columns(path, ["t", "re", "im"], [self.t, self.values.real, self.values.imag])

    def diagnostics(self):
        return {"label": self.label, "n_steps": self.grid.n_steps, "t_final": self.grid.t_final,
                "residual": self.residual, "rhs_norm": self.rhs_norm,
                "relative_residual": self.residual / self.rhs_norm if self.rhs_norm else 0.0,
                "condition_estimate": self.condition}

    def write_report(self, path):
        with open(path, "w") as fh:
            json.dump(self.diagnostics(), fh, indent=2)


def _checked_solve(system, Y):
    """Solve A Z = Y and check the normwise backward error.

    The bound is RESIDUAL_RTOL * (|A| |Z| + |Y|): a double-precision Z cannot
    push |A Z - Y| below roughly ulp(Z) |A|, which for smooth right-hand sides
    can exceed 1e-10 |Y| on its own.
    """
    Z = system.solve(Y)
    r = system.apply_A(Z) - Y
    res, ynorm = np.linalg.norm(r, axis=0), np.linalg.norm(Y, axis=0)
    bound = RESIDUAL_RTOL * (system.norm_A * np.linalg.norm(Z, axis=0) + ynorm)
    if np.any(res > bound):
        Z = Z - system.solve(r)  # one step of iterative refinement
        res = np.linalg.norm(system.apply_A(Z) - Y, axis=0)
        if np.any(res > bound):
            raise WellPosednessError(f"residual {res.max():.3g} above backward-error bound {bound.max():.3g}")
    return Z, res, ynorm


def solve_boundary_value(system, problem):
    Y = build_rhs(system, problem)
    Z, res, ynorm = _checked_solve(system, Y)
    values = np.concatenate([[problem.left], Z, [problem.right]]).astype(complex)
    return SampledSolution(system.grid, values, float(res), float(ynorm), system.condition, problem.label)


def solve_h_batch(system, noises):
    """h on the grid for many noise rows at once; returns (n_paths, N+1)."""
    W = np.atleast_2d(np.asarray(noises, dtype=float))
    Y = (system.eps * math.sqrt(system.lam) / 2) * W[:, 1:-1].T.astype(complex)
    Z, _, _ = _checked_solve(system, Y)
    out = np.zeros((W.shape[0], system.n + 1), dtype=complex)
    out[:, 1:-1] = Z.T
    return out


# --- prefactor -------------------------------------------------------------

def prefactor_u(system):
    """Finite-N prefactor u_N = det(I + B^{-1} C) = det(A) / det(B)."""
    if system.lam == 0:
        return 1.0 + 0j
    return complex(np.exp(system.log_det_A() - system.log_det_B()))


@dataclass
class PrefactorEstimate:
    value: complex
    coarse: complex
    fine: complex
    n_coarse: int
    order: float


def prefactor_extrapolated(kernel, t_final, n_steps, lam, order=2.0, mass=1.0, hbar=1.0):
    """Richardson extrapolation of u_N in 1/N from grids N and 2N.

    ``order`` is the assumed convergence order of u_N; the tests measure it
    from three grids.
    """
    coarse = prefactor_u(assemble_system(kernel, TimeGrid(t_final, n_steps), lam, mass, hbar))
    fine = prefactor_u(assemble_system(kernel, TimeGrid(t_final, 2 * n_steps), lam, mass, hbar))
    r = 2.0**order
    return PrefactorEstimate((r * fine - coarse) / (r - 1), coarse, fine, n_steps, order)


def resolvent_matrix(system, mu):
    """Discrete resolvent R(mu) = (B - mu C)^{-1} C / eps on the interior nodes."""
    M = system.B - mu * system.C
    return linalg.solve(M, system.C / system.eps)


def prefactor_via_resolvent(system, n_mu=12):
    """u_N = exp(int_{-1}^0 eps Tr R(mu) dmu), Gauss-Legendre in mu."""
    if system.lam == 0:
        return 1.0 + 0j
    x, w = np.polynomial.legendre.leggauss(n_mu)
    mus = (x - 1) / 2
    total = 0.0
    for mu, wk in zip(mus, w):
        total += wk / 2 * system.eps * np.trace(resolvent_matrix(system, mu))
    return complex(np.exp(total))


# --- well-posedness probe --------------------------------------------------

@dataclass
class UniquenessReport:
    n_steps: list
    smallest_singular: list  # of A / eps, the discretized operator
    ratio: float
    stable: bool


def uniqueness_probe(kernel, t_final, n_list, lam, mass=1.0, hbar=1.0, tol=1e-10):
    """Smallest singular value of A/eps across grids.

    ``kernel`` may be a kernel object or a callable D(t, s).  Non-symmetric or
    indefinite kernel matrices are rejected before any solve.
    """
    smin = []
    for n in n_list:
        grid = TimeGrid(t_final, n)
        if hasattr(kernel, "matrix"):
            D = np.asarray(kernel.matrix(grid), dtype=float)
        else:
            tn = grid.nodes
            D = np.asarray(kernel(tn[:, None], tn[None, :]), dtype=float)
        scale = max(np.abs(D).max(), 1e-300)
        asym = np.abs(D - D.T).max()
        if asym > tol * scale:
            raise ValueError(f"kernel is not symmetric (max asymmetry {asym:.3g})")
        if not isinstance(kernel, White):
            lo = np.linalg.eigvalsh(D).min()
            if lo < -tol * np.linalg.norm(D, 2):
                raise ValueError(f"kernel is not positive-semidefinite (min eigenvalue {lo:.3g})")
        system = DiscretizedSystem(grid, float(lam), D, mass, hbar)
        smin.append(float(linalg.svdvals(system.A).min() / grid.eps))
    ratio = max(smin) / min(smin)
    return UniquenessReport(list(n_list), smin, ratio, bool(min(smin) > 0 and ratio < 2.0))
