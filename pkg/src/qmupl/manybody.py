"""Centre-of-mass / relative-motion separation for N particles.

Relative noises pick up the covariance C_nm = delta_nm + sqrt(lam_n lam_m)/lam_N
(n, m < N).  C = I + v v^T with v_n = sqrt(lam_n / lam_N), so its spectrum is
{1 + |v|^2, 1, ..., 1}; that closed form cross-checks the symmetric solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import derive_coupling


@dataclass(frozen=True)
class ParticleSystem:
    masses: np.ndarray
    lambda0: float
    m0: float

    @property
    def couplings(self):
        return np.array([derive_coupling(m, self.m0, self.lambda0) for m in self.masses])

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    @property
    def com_coupling(self):
        """lambda of the centre of mass: the sum of the constituents' couplings."""
        return float(np.sum(self.couplings))


@dataclass(frozen=True)
class CouplingMatrix:
    matrix: np.ndarray
    certificate: float  # X^T Y = 1 - lam/lam_N; positive-definite iff < 1

    @property
    def positive_definite(self):
        return self.certificate < 1.0


def _check_lambdas(lambdas):
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("need at least two particles")
    if np.any(~(lam > 0)):
        raise ValueError("all couplings must be positive")
    return lam


def coupling_matrix(lambdas):
    lam = _check_lambdas(lambdas)
    v = np.sqrt(lam[:-1] / lam[-1])
    C = np.eye(v.size) + np.outer(v, v)
    # rank-one perturbation I - X Y^T with X = -v, Y = v: PD iff X^T Y < 1
    cert = 1.0 - lam.sum() / lam[-1]
    return CouplingMatrix(C, float(cert))


@dataclass(frozen=True)
class RelativeNoiseModel:
    C: np.ndarray
    O: np.ndarray
    d: np.ndarray
    lambdas_bar: np.ndarray
    rank_one_error: float


def diagonalize_relative(C, lambdas):
    """O^T C O = diag(d) and the effective relative couplings lambda_bar_n = lambda_n d_n.

    With w_bar = O^T w~ / sqrt(d) (unit covariance) and
    q_bar_n = (O^T sqrt(lam) q~)_n / sqrt(lam_n), the coupling identity
    sum sqrt(lam_n) q~_n w~_n = sum sqrt(lam_bar_n) q_bar_n w_bar_n fixes
    lambda_bar_n = lambda_n d_n.
    """
    C = np.asarray(getattr(C, "matrix", C), dtype=float)
    lam = _check_lambdas(lambdas)
    if C.shape != (lam.size - 1,) * 2:
        raise ValueError("C does not match the number of couplings")
    try:
        d, O = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigen-decomposition failed: {exc}") from exc
    if np.any(d <= 0):
        raise ArithmeticError("C has a non-positive eigenvalue")
    v2 = np.sum(lam[:-1]) / lam[-1]
    expected = np.sort(np.r_[np.ones(lam.size - 2), 1 + v2])
    err = float(np.max(np.abs(np.sort(d) - expected)))
    return RelativeNoiseModel(C, O, d, lam[:-1] * d, err)


def transform_noises(model, w_tilde):
    """w_bar_n = d_n^-1/2 sum_m O_mn w~_m for noises stacked along axis 0."""
    return (model.O.T @ np.asarray(w_tilde)) / np.sqrt(model.d)[:, None]


def transform_coordinates(model, lambdas, q_tilde):
    lam = np.asarray(lambdas, dtype=float)[:-1]
    return (model.O.T @ (np.sqrt(lam) * np.asarray(q_tilde))) / np.sqrt(lam)


def bilinear_identity_residual(model, lambdas, q_tilde, w_tilde):
    lam = np.asarray(lambdas, dtype=float)[:-1]
    lhs = np.sum(np.sqrt(lam) * q_tilde * w_tilde)
    w_bar = transform_noises(model, np.asarray(w_tilde)[:, None])[:, 0]
    q_bar = transform_coordinates(model, lambdas, q_tilde)
    rhs = np.sum(np.sqrt(model.lambdas_bar) * q_bar * w_bar)
    return float(abs(lhs - rhs))


def sample_relative_noises(model, kernel, grid, rng):
    """Correlated relative noises with E[w~_n w~_m] = C_nm D(t, s), shape (N-1, n_steps+1).

    Time correlations come from the kernel's covariance matrix; particle
    correlations from a Cholesky factor of C.
    """
    cov_t = kernel.matrix(grid)
    Lt = np.linalg.cholesky(cov_t + 1e-14 * np.trace(cov_t) / cov_t.shape[0] * np.eye(cov_t.shape[0]))
    Lc = np.linalg.cholesky(model.C)
    xi = rng.standard_normal((model.C.shape[0], grid.n_steps + 1))
    return Lc @ xi @ Lt.T


@dataclass(frozen=True)
class DecouplingReport:
    satisfied: bool
    residual: float
    scale: float


def decoupling_condition(kernel_matrix, lambdas, rtol=1e-10):
    """Check sum_m [sqrt(lam_m) D_mn - sqrt(lam_n lam_m / lam_N) D_mN] = 0 for n < N.

    ``kernel_matrix`` has shape (N, N, ...): particle indices first, then any
    sampled (t, s) axes.  A single particle satisfies it vacuously.
    """
    lam = np.asarray(lambdas, dtype=float)
    D = np.asarray(kernel_matrix, dtype=float)
    if lam.size < 2:
        return DecouplingReport(True, 0.0, 0.0)
    if D.shape[:2] != (lam.size, lam.size):
        raise ValueError("kernel matrix must have particle indices first")
    root = np.sqrt(lam)
    extra = (None,) * (D.ndim - 2)
    r = root[(slice(None),) + extra]
    term1 = np.sum(r[:, None] * D, axis=0)  # index n
    term2 = root[:-1][(slice(None),) + extra] / root[-1] * np.sum(r * D[:, -1], axis=0)[None]
    res = term1[:-1] - term2
    scale = float(np.max(np.abs(D)) * root.sum()) or 1.0
    worst = float(np.max(np.abs(res)))
    return DecouplingReport(worst < rtol * scale, worst, scale)
