"""Green's-function coefficients, Gaussian propagation and the equivalent SSE.

The propagator is

    G(x, t; x0, 0) = sqrt(m / (2 i pi hbar t u)) *
        exp[-A x0^2 - At x^2 + B x0 x + C x0 + D x + E]

with A = k f'(0), At = -k g'(t), B = k (f'(t) - g'(0)), k = i m / 2 hbar,
C = -k h'(0) + (sqrt(lam)/2) int w f, D = k h'(t) + (sqrt(lam)/2) int w g,
E = (sqrt(lam)/2) int w h.  A Gaussian exp(-a x^2 + b x + c) maps to

    a_t = At - B^2 / 4(a + A),  b_t = D + B (C + b) / 2(a + A),
    c_t = c + E + (C + b)^2 / 4(a + A)  [+ log prefactor].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from . import closed_form as cf
from .bvp import BoundaryProblem, assemble_system, prefactor_u, solve_boundary_value
from .noise import NoisePath, write_columns
from .params import Exponential, TimeGrid, White

T_FLOOR = 1e-8  # in units of 1/omega; below this the map is the identity


class SingularMapError(ArithmeticError):
    pass


class NonNormalizableError(ArithmeticError):
    pass


# --- sampled profiles ------------------------------------------------------

@dataclass
class Profile:
    """A function on a grid plus its endpoint derivatives."""

    grid: TimeGrid
    values: np.ndarray
    d0: complex
    dt: complex

    @classmethod
    def from_solution(cls, sol):
        return cls(sol.grid, sol.values, sol.d0, sol.dt)

    @classmethod
    def from_values(cls, grid, values):
        z, e = np.asarray(values), grid.eps
        return cls(grid, z, (-3 * z[0] + 4 * z[1] - z[2]) / (2 * e), (3 * z[-1] - 4 * z[-2] + z[-3]) / (2 * e))

    def reversed(self):
        """s -> t - s; derivatives flip sign and swap ends."""
        return Profile(self.grid, self.values[::-1].copy(), -self.dt, -self.d0)


def _omega(lam, mass, hbar):
    return 2.0 * math.sqrt(hbar * lam / mass)


def f_profile(kernel, grid, lam=0.25, mass=1.0, hbar=1.0, method="auto"):
    """f on the grid: closed form for white/exponential, else the discretized solver."""
    t = grid.t_final
    if method == "auto":
        method = "closed" if isinstance(kernel, (White, Exponential)) else "bvp"
    if method == "closed":
        if isinstance(kernel, White):
            ws = cf.white_solution(t, lam, mass, hbar)
            return Profile(grid, ws.f(grid.nodes), ws.f_prime0(), ws.f_primet())
        if isinstance(kernel, Exponential):
            p = cf.exp_f_profile(cf.exp_roots(kernel.gamma, _omega(lam, mass, hbar)), t, grid.nodes)
            return Profile(grid, p.f, p.d0, p.dt)
        raise ValueError("closed form only exists for white and exponential kernels")
    sys = assemble_system(kernel, grid, lam, mass, hbar)
    return Profile.from_solution(solve_boundary_value(sys, BoundaryProblem.f()))


def g_profile(kernel, grid, lam=0.25, mass=1.0, hbar=1.0, method="auto"):
    if kernel.tti:
        return f_profile(kernel, grid, lam, mass, hbar, method).reversed()
    sys = assemble_system(kernel, grid, lam, mass, hbar)
    return Profile.from_solution(solve_boundary_value(sys, BoundaryProblem.g()))


def h_profile(kernel, noise, lam=0.25, mass=1.0, hbar=1.0, method="auto"):
    grid = noise.grid
    if method == "auto":
        method = "closed" if isinstance(kernel, Exponential) and noise.smooth else "bvp"
    if method == "closed":
        if isinstance(kernel, White):
            return Profile.from_values(grid, cf.white_solution(grid.t_final, lam, mass, hbar).h(noise))
        roots = cf.exp_roots(kernel.gamma, _omega(lam, mass, hbar))
        return Profile.from_values(grid, cf.exp_h(roots, noise, lam, mass, hbar))
    sys = assemble_system(kernel, grid, lam, mass, hbar)
    return Profile.from_solution(solve_boundary_value(sys, BoundaryProblem.h(noise)))


# --- coefficients ----------------------------------------------------------

@dataclass(frozen=True)
class GreenCoefficients:
    t: float
    A: complex
    A_tilde: complex
    B: complex
    C: complex = 0j
    D: complex = 0j
    E: complex = 0j
    u: Optional[complex] = None
    mass: float = 1.0
    hbar: float = 1.0

    @property
    def k(self):
        return 1j * self.mass / (2 * self.hbar)


def _same_grid(a, b):
    return a.t_final == b.t_final and a.n_steps == b.n_steps


def greens_coefficients(f, h=None, noise=None, g=None, lam=0.25, mass=1.0, hbar=1.0, u=None):
    """Coefficients from sampled profiles (``g=None`` means time-translation invariant)."""
    g = f.reversed() if g is None else g
    grid = f.grid
    for other in (g, h, noise):
        if other is not None and not _same_grid(other.grid, grid):
            raise ValueError("profiles and noise must share one grid")
    k = 1j * mass / (2 * hbar)
    A, At, B = k * f.d0, -k * g.dt, k * (f.dt - g.d0)
    C = D = E = 0j
    if noise is not None:
        s, w = grid.nodes, noise.values
        half = math.sqrt(lam) / 2
        hv = h.values if h is not None else np.zeros_like(s)
        hd0 = h.d0 if h is not None else 0.0
        hdt = h.dt if h is not None else 0.0
        C = -k * hd0 + half * trapezoid(w * f.values, s)
        D = k * hdt + half * trapezoid(w * g.values, s)
        E = half * trapezoid(w * hv, s)
    return GreenCoefficients(grid.t_final, complex(A), complex(At), complex(B), complex(C), complex(D),
                             complex(E), u, mass, hbar)


def coefficients_for(kernel, grid, noise=None, lam=0.25, mass=1.0, hbar=1.0, method="auto",
                     with_prefactor=False):
    """Convenience wrapper: profiles, then coefficients, on one grid."""
    f = f_profile(kernel, grid, lam, mass, hbar, method)
    g = None if kernel.tti else g_profile(kernel, grid, lam, mass, hbar, method)
    h = h_profile(kernel, noise, lam, mass, hbar, method) if noise is not None else None
    u = None
    if with_prefactor:
        if isinstance(kernel, White) and method != "bvp":
            u = cf.white_solution(grid.t_final, lam, mass, hbar).u()
        else:
            u = prefactor_u(assemble_system(kernel, grid, lam, mass, hbar))
    return greens_coefficients(f, h, noise, g, lam, mass, hbar, u)


# --- Gaussian states -------------------------------------------------------

@dataclass(frozen=True)
class GaussianState:
    """psi(x) = exp(-alpha x^2 + beta x + gamma)."""

    alpha: complex
    beta: complex = 0j
    gamma: complex = 0j
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not np.real(self.alpha) > 0:
            raise NonNormalizableError(f"Re alpha must be positive, got {self.alpha}")

    @classmethod
    def normalized(cls, alpha, beta=0j, mass=1.0, hbar=1.0):
        a_r, b_r = np.real(alpha), np.real(beta)
        gamma = -0.25 * math.log(math.pi / (2 * a_r)) - b_r**2 / (4 * a_r)
        return cls(complex(alpha), complex(beta), complex(gamma), mass, hbar)

    @property
    def log_norm2(self):
        """log of the squared L2 norm."""
        a_r, b_r = self.alpha.real, self.beta.real
        return 0.5 * math.log(math.pi / (2 * a_r)) + b_r**2 / (2 * a_r) + 2 * self.gamma.real

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.alpha * x**2 + self.beta * x + self.gamma)


def free_alpha(alpha0, t, mass=1.0, hbar=1.0):
    return alpha0 * mass / (mass + 2j * hbar * alpha0 * t)


def propagate_gaussian(state, coeffs, track_norm=False):
    """Map a Gaussian through the propagator with the given coefficients."""
    if coeffs.t < T_FLOOR:
        return state
    den = state.alpha + coeffs.A
    if abs(den) == 0 or not np.isfinite(den):
        raise SingularMapError("alpha0 + A vanishes")
    cb = coeffs.C + state.beta
    alpha = coeffs.A_tilde - coeffs.B**2 / (4 * den)
    beta = coeffs.D + coeffs.B * cb / (2 * den)
    gamma = state.gamma + coeffs.E + cb**2 / (4 * den)
    if track_norm:
        if coeffs.u is None:
            raise ValueError("normalization needs the prefactor u")
        m, hb = state.mass, state.hbar
        gamma += 0.5 * np.log(m / (2j * math.pi * hb * coeffs.t * coeffs.u)) + 0.5 * np.log(math.pi / den)
    if not alpha.real > 0:
        raise NonNormalizableError(f"propagated Re alpha = {alpha.real:.3g} is not positive")
    return replace(state, alpha=complex(alpha), beta=complex(beta), gamma=complex(gamma))


@dataclass(frozen=True)
class Observables:
    sigma: float
    mean_q: float
    mean_p: float
    var_p: float
    energy: float  # <p^2> / 2m


def observables(state):
    a, b = state.alpha, state.beta
    if not a.real > 0:
        raise NonNormalizableError("Re alpha <= 0")
    sigma = 1.0 / (2 * math.sqrt(a.real))
    q = b.real / (2 * a.real)
    p = state.hbar * (b.imag - a.imag / a.real * b.real)
    var_p = state.hbar**2 * abs(a) ** 2 / a.real
    return Observables(sigma, q, p, var_p, (p**2 + var_p) / (2 * state.mass))


# --- SSE coefficients ------------------------------------------------------

@dataclass
class SSECoefficients:
    grid: TimeGrid
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


class DegenerateProfileError(ZeroDivisionError):
    pass


def sse_coefficients(f, h=None, noise=None, g=None, lam=0.25, mass=1.0, hbar=1.0):
    """a_t(s), b_t(s), c_t(s) of the equivalent stochastic Schroedinger equation.

    dphi/dt = [-i p^2/(2 m hbar) + sqrt(lam) q w(t)
               - 2 lam q int_0^t D(t,s) (q a + p b + c) ds] phi.
    With Delta = g'(0) - f'(t):
      a = g + 2 g'(t) f / Delta,   b = -2 f / (m Delta),
      c = h + f (h'(t) - i sqrt(lam) hbar/m int w g) / Delta.
    """
    tti = g is None
    g = f.reversed() if tti else g
    delta = g.d0 - f.dt
    if abs(delta) == 0 or (tti and f.dt == 0):
        raise DegenerateProfileError("g'(0) - f'(t) vanishes")
    a = g.values + 2 * g.dt * f.values / delta
    b = -2 * f.values / (mass * delta)
    c = np.zeros_like(f.values, dtype=complex)
    if noise is not None:
        s = f.grid.nodes
        hv = h.values if h is not None else np.zeros_like(s)
        hdt = h.dt if h is not None else 0.0
        drive = hdt - 1j * math.sqrt(lam) * hbar / mass * trapezoid(noise.values * g.values, s)
        c = hv + f.values * drive / delta
    return SSECoefficients(f.grid, a, b, c)


def kernel_row(kernel, grid):
    """D(t, s) on the grid nodes with trapezoid weights; white noise puts 1/2 at s = t."""
    n = grid.n_steps
    if isinstance(kernel, White):
        row = np.zeros(n + 1)
        row[-1] = 0.5
        return row
    s = grid.nodes
    weights = np.full(n + 1, grid.eps)
    weights[0] = weights[-1] = grid.eps / 2
    return kernel(np.full_like(s, grid.t_final), s) * weights


def sse_rate(state, sse, kernel, w_t, lam=0.25):
    """(d alpha/dt, d beta/dt) from the SSE applied to a Gaussian state."""
    m, hb = state.mass, state.hbar
    a, b = state.alpha, state.beta
    row = kernel_row(kernel, sse.grid)
    Ia, Ib, Ic = row @ sse.a, row @ sse.b, row @ sse.c
    dalpha = -(2j * hb / m * a**2 - 2 * lam * (Ia + 2j * hb * a * Ib))
    dbeta = -2j * hb / m * a * b + math.sqrt(lam) * w_t - 2 * lam * (Ic - 1j * hb * b * Ib)
    return complex(dalpha), complex(dbeta)


@dataclass
class ConsistencyReport:
    deltas: list
    residuals: list  # max of the alpha and beta mismatches per delta

    @property
    def ratios(self):
        return [self.residuals[i] / self.residuals[i + 1] for i in range(len(self.residuals) - 1)]


def sse_consistency(kernel, noise_fn, state0, t, deltas, n_steps=2000, lam=0.25, method="auto"):
    """Compare central differences of the Green's-function map with the SSE rate.

    ``noise_fn(grid)`` must return a smooth test noise on ``grid``.  The
    residual should scale like delta^2.
    """
    residuals = []
    eps = t / n_steps

    def evolve(T):
        n = max(int(round(T / eps)), 8)
        grid = TimeGrid(T, n)
        nz = noise_fn(grid)
        co = coefficients_for(kernel, grid, nz, lam, state0.mass, state0.hbar, method)
        return propagate_gaussian(state0, co)

    grid = TimeGrid(t, n_steps)
    nz = noise_fn(grid)
    f = f_profile(kernel, grid, lam, state0.mass, state0.hbar, method)
    g = None if kernel.tti else g_profile(kernel, grid, lam, state0.mass, state0.hbar, method)
    h = h_profile(kernel, nz, lam, state0.mass, state0.hbar, method)
    sse = sse_coefficients(f, h, nz, g, lam, state0.mass, state0.hbar)
    st = propagate_gaussian(state0, greens_coefficients(f, h, nz, g, lam, state0.mass, state0.hbar))
    da, db = sse_rate(st, sse, kernel, nz.values[-1], lam)
    for d in deltas:
        plus, minus = evolve(t + d), evolve(t - d)
        fa = (plus.alpha - minus.alpha) / (2 * d)
        fb = (plus.beta - minus.beta) / (2 * d)
        residuals.append(max(abs(fa - da), abs(fb - db)))
    return ConsistencyReport(list(deltas), residuals)


# --- deterministic spreads in SI -------------------------------------------

def alpha_si(params, kernel, t, alpha0, rtol=1e-12):
    """alpha_t (complex, m^-2) for a noise-free run in SI, with adaptive precision.

    ``kernel`` is White() or Exponential(gamma in s^-1).  The map
    alpha0 -> A - k^2 f'(t)^2 / (alpha0 + A) cancels catastrophically when
    A ~ m / (hbar t) dwarfs alpha0, so it runs in mpmath with the working
    precision raised until two levels agree to ``rtol``.
    """
    import mpmath as mp

    if t <= 0:
        return complex(alpha0)
    if params.lam == 0:
        return complex(free_alpha(alpha0, t, params.mass, params.hbar))
    if isinstance(kernel, White):
        derivs = lambda: cf._mp_white_derivs(params.omega, t)  # noqa: E731
    else:
        derivs = lambda: cf._mp_exp_derivs(kernel.gamma, params.omega, t)  # noqa: E731
    extra = max(0, int(math.log10(max(params.mass / (params.hbar * t * abs(alpha0)), 1.0))))
    dps, prev = 30 + extra, None
    while dps < 4000:
        with mp.workdps(dps):
            d0, dt = derivs()
            k = mp.mpc(0, mp.mpf(params.mass) / (2 * mp.mpf(params.hbar)))
            A = k * d0
            a = A - (k * dt) ** 2 / (mp.mpc(alpha0) + A)
            if prev is not None and abs(a - prev) <= rtol * abs(a):
                return complex(a)
            prev = a
        dps += 20
    raise ArithmeticError("alpha_t did not converge in extended precision")


def sigma_si(params, kernel, times, sigma0):
    """Spread sigma(t) in metres for an initial spread sigma0 (real Gaussian)."""
    alpha0 = 1.0 / (4 * sigma0**2)
    out = []
    for t in np.atleast_1d(times):
        a = alpha_si(params, kernel, float(t), alpha0)
        out.append(1.0 / (2 * math.sqrt(a.real)))
    return np.array(out)


@dataclass
class MassScalingReport:
    mass_ratio: float
    max_deviation: float  # relative


def mass_rescale_check(params, kernel, times, sigma0_ref, mass):
    """Compare sigma_m(t) sqrt(m/m0) with sigma_m0(t) for rescaled initial spreads.

    Both runs are carried out directly in SI with the same lambda0.
    """
    ref = params.with_mass(params.m0)
    other = params.with_mass(mass)
    ratio = mass / params.m0
    s_ref = sigma_si(ref, kernel, times, sigma0_ref)
    s_m = sigma_si(other, kernel, times, sigma0_ref / math.sqrt(ratio))
    dev = np.max(np.abs(s_m * math.sqrt(ratio) - s_ref) / s_ref)
    return MassScalingReport(ratio, float(dev))


def write_trajectory(path, times, states):
    obs = [observables(s) for s in states]
    cols = [np.asarray(times), [o.sigma for o in obs], [o.mean_q for o in obs], [o.mean_p for o in obs],
            [s.alpha.real for s in states], [s.alpha.imag for s in states],
            [s.beta.real for s in states], [s.beta.imag for s in states]]
    write_columns(path, ["t", "sigma", "mean_q", "mean_p", "alpha_re", "alpha_im", "beta_re", "beta_im"], cols)


# --- exact coefficients of the discretized path integral --------------------

@dataclass
class DiscreteCoefficients:
    """Gaussian coefficients of the trapezoid-discretized propagator.

    Deterministic parts are scalars; C, D, E are arrays over noise paths.
    With u = det(A)/det(B) the discrete propagator equals
    sqrt(m / 2 i pi hbar t u) exp(-A x0^2 - At x^2 + B x0 x + C x0 + D x + E)
    exactly, so ensemble averages of |phi|^2 under the noise law are exact
    for the discrete model.
    """

    t: float
    A: complex
    A_tilde: complex
    B: complex
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    u: complex
    mass: float = 1.0
    hbar: float = 1.0

    def path(self, i):
        return GreenCoefficients(self.t, self.A, self.A_tilde, self.B, complex(self.C[i]), complex(self.D[i]),
                                 complex(self.E[i]), self.u, self.mass, self.hbar)


def discrete_coefficients(system, noises):
    """Complete the square in the discrete exponent for every noise row.

    The exponent is -Z^T A Z + 2 Y^T Z + (endpoint terms), Y = Y0 + y_a x0 + y_b x.
    """
    from .bvp import prefactor_u

    W = np.atleast_2d(np.asarray(noises, dtype=float))
    n, eps, lam = system.n, system.eps, system.lam
    Dm = system.kernel_matrix
    b_off = system.b_off
    c2 = eps**2 * lam
    y_a = -(c2 / 2) * Dm[1:-1, 0].astype(complex)
    y_b = -(c2 / 2) * Dm[1:-1, -1].astype(complex)
    y_a[0] -= b_off
    y_b[-1] -= b_off
    FG = system.solve(np.column_stack([y_a, y_b]))
    F, G = FG[:, 0], FG[:, 1]
    A = -(y_a @ F + b_off - c2 * Dm[0, 0] / 4)
    At = -(y_b @ G + b_off - c2 * Dm[-1, -1] / 4)
    B = 2 * (y_a @ G) - c2 * Dm[0, -1] / 2
    half = eps * math.sqrt(lam) / 2
    Y0 = half * W[:, 1:-1]
    C = 2 * Y0 @ F + half * W[:, 0]
    D = 2 * Y0 @ G + half * W[:, -1]
    if W.shape[0]:
        H = system.solve(Y0.T.astype(complex))
        E = np.einsum("ij,ji->i", Y0, H)
    else:
        E = np.zeros(0, dtype=complex)
    return DiscreteCoefficients(system.grid.t_final, complex(A), complex(At), complex(B), C, D, E,
                                prefactor_u(system), system.mass, system.hbar)


def propagate_batch(alpha0, beta0, gamma0, co):
    """Vectorized map of one initial Gaussian through many coefficient sets.

    Returns (alpha, beta, log_norm2) with the full prefactor included.
    """
    m, hb, t = co.mass, co.hbar, co.t
    den = alpha0 + co.A
    if abs(den) == 0:
        raise SingularMapError("alpha0 + A vanishes")
    cb = co.C + beta0
    alpha = co.A_tilde - co.B**2 / (4 * den)
    if not alpha.real > 0:
        raise NonNormalizableError(f"propagated Re alpha = {alpha.real:.3g}")
    beta = co.D + co.B * cb / (2 * den)
    # only |prefactor| matters for norms and density matrices
    log_pref = 0.5 * math.log(abs(m / (2 * math.pi * hb * t * co.u))) + 0.5 * math.log(abs(math.pi / den))
    gamma_re = np.real(gamma0 + co.E + cb**2 / (4 * den)) + log_pref
    log_norm2 = 0.5 * math.log(math.pi / (2 * alpha.real)) + beta.real**2 / (2 * alpha.real) + 2 * gamma_re
    return complex(alpha), beta, log_norm2
