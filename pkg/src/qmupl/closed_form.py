"""Analytic solutions for white and exponentially correlated noise.

Everything is written for general (mass, hbar, lam); callers normally pass
natural units (1, 1, 1/4), where omega = 1.

Exponential kernel D = (gamma/2) exp(-gamma |t - s|).  Differentiating the
integral equation twice gives

    f'''' - gamma^2 f'' + (i gamma^2 omega^2 / 2) f = 0,

with characteristic roots +-v1, +-v2, v_{1,2}^2 = (gamma^2 +- zeta) / 2 and
zeta = sqrt(gamma^4 - 2 i gamma^2 omega^2).  The two extra boundary
conditions f'''(0) = gamma f''(0), f'''(t) = -gamma f''(t) make the
fourth-order problem equivalent to the integral one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .noise import NoisePath


def _omega(lam, mass, hbar):
    return 2.0 * math.sqrt(hbar * lam / mass)


# --- white noise -----------------------------------------------------------

@dataclass(frozen=True)
class WhiteNoiseSolution:
    t: float
    lam: float = 0.25
    mass: float = 1.0
    hbar: float = 1.0

    @property
    def omega(self):
        return _omega(self.lam, self.mass, self.hbar)

    @property
    def upsilon(self):
        return (1 + 1j) * self.omega / 2

    @property
    def k(self):
        return 1j * self.mass / (2 * self.hbar)

    def f(self, s):
        """sinh v(t-s) / sinh v t, written to stay finite for large v t."""
        s = np.asarray(s, dtype=float)
        if self.t == 0:
            return np.ones_like(s, dtype=complex)
        v, t = self.upsilon, self.t
        return np.exp(-v * s) * -np.expm1(-2 * v * (t - s)) / -np.expm1(-2 * v * t)

    def f_prime0(self):
        return -self.upsilon / np.tanh(self.upsilon * self.t)

    def f_primet(self):
        return -self.upsilon / np.sinh(self.upsilon * self.t)

    def u(self):
        x = self.upsilon * self.t
        return 1.0 + 0j if x == 0 else np.sinh(x) / x

    @property
    def A(self):
        return self.lam / self.upsilon / np.tanh(self.upsilon * self.t)

    @property
    def B(self):
        return 2 * self.lam / self.upsilon / np.sinh(self.upsilon * self.t)

    # noise quadratures (trapezoid on the noise grid)
    def _check(self, noise):
        if not isinstance(noise, NoisePath):
            raise TypeError("expected a NoisePath")
        if abs(noise.grid.t_final - self.t) > 1e-12 * max(self.t, 1.0):
            raise ValueError("noise grid does not end at t")
        return noise.t, noise.values

    def C(self, noise):
        s, w = self._check(noise)
        return math.sqrt(self.lam) * trapezoid(w * self.f(s), s)

    def D(self, noise):
        s, w = self._check(noise)
        return math.sqrt(self.lam) * trapezoid(w * self.f(self.t - s), s)

    def _sinh_moment(self, noise):
        """I(l) = int_0^l w(s) sinh(v s) ds on the grid."""
        s, w = noise.t, noise.values
        return cumulative_trapezoid(w * np.sinh(self.upsilon * s), s, initial=0)

    def E_double(self, noise):
        """E_t from the double-integral form."""
        s, w = self._check(noise)
        v = self.upsilon
        I = self._sinh_moment(noise)
        J = cumulative_trapezoid(w * np.cosh(v * s), s, initial=0)
        inner = np.sinh(v * s) * J - np.cosh(v * s) * I  # int_0^l w(s) sinh v(l-s) ds
        first = trapezoid(w * np.sinh(v * s), s) * trapezoid(w * self.f(s), s)
        return v / 4 * (first - trapezoid(w * inner, s))

    def E_nested(self, noise):
        s, w = self._check(noise)
        I = self._sinh_moment(noise)
        return self.upsilon / 2 * trapezoid(w * self.f(s) * I, s)

    def E_squared(self, noise):
        s, w = self._check(noise)
        v = self.upsilon
        I = self._sinh_moment(noise)
        integrand = np.zeros_like(I)
        integrand[1:] = I[1:] ** 2 / np.sinh(v * s[1:]) ** 2
        return v**2 / 4 * trapezoid(integrand, s)

    def E_from_D(self, noise):
        """(v^2 / 4 lam) int_0^t D_l^2 dl, with D_l the coefficient on [0, l]."""
        s, w = self._check(noise)
        v = self.upsilon
        I = self._sinh_moment(noise)
        D = np.zeros_like(I)
        D[1:] = math.sqrt(self.lam) * I[1:] / np.sinh(v * s[1:])
        return v**2 / (4 * self.lam) * trapezoid(D**2, s)

    def h_particular(self, noise):
        s, w = self._check(noise)
        v = self.upsilon
        I = self._sinh_moment(noise)
        J = cumulative_trapezoid(w * np.cosh(v * s), s, initial=0)
        conv = np.sinh(v * s) * J - np.cosh(v * s) * I
        return -1j * self.hbar * math.sqrt(self.lam) / (self.mass * v) * conv

    def h(self, noise):
        hp = self.h_particular(noise)
        return hp - hp[-1] * self.f(self.t - noise.t)


def white_solution(t, lam=0.25, mass=1.0, hbar=1.0):
    if lam <= 0:
        raise ValueError("white-noise closed form needs lam > 0")
    if t < 0:
        raise ValueError("t must be non-negative")
    return WhiteNoiseSolution(float(t), lam, mass, hbar)


def white_resolvent(s, r, mu, t, upsilon):
    """Continuum resolvent R(s, r, mu) for white noise, mu in [-1, 0]."""
    s, r = np.broadcast_arrays(np.asarray(s, float), np.asarray(r, float))
    lo, hi = np.minimum(s, r), np.maximum(s, r)
    nu = math.sqrt(-mu)
    if nu == 0:
        return upsilon**2 * lo * (t - hi) / t + 0j
    x = upsilon * nu
    return upsilon / nu * np.sinh(x * lo) * np.sinh(x * (t - hi)) / np.sinh(x * t)


# --- exponential kernel ----------------------------------------------------

@dataclass(frozen=True)
class ExponentialRoots:
    gamma: float
    omega: float
    zeta: complex
    v1: complex
    v2: complex

    @property
    def roots(self):
        return np.array([self.v1, self.v2])


def exp_roots(gamma, omega):
    """Principal-branch roots; both have positive real part for gamma, omega > 0.

    v2^2 is formed as i gamma^2 omega^2 / (gamma^2 + zeta) to avoid the
    cancellation in (gamma^2 - zeta) / 2 when gamma >> omega.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    x = omega / gamma
    zeta = gamma**2 * np.sqrt(1 - 2j * x**2 + 0j)
    v1 = np.sqrt((gamma**2 + zeta) / 2)
    v2 = np.sqrt(1j * gamma**2 * omega**2 / (gamma**2 + zeta))
    return ExponentialRoots(float(gamma), float(omega), complex(zeta), complex(v1), complex(v2))


@dataclass(frozen=True)
class ExpCoefficientTable:
    a: np.ndarray  # index 0 -> k = 1, index 1 -> k = 2
    b: np.ndarray
    c: complex
    d: np.ndarray


def coefficient_table(roots):
    g, z = roots.gamma, roots.zeta
    v = roots.roots
    sign = np.array([1.0, -1.0])  # (-1)^kbar
    a = g * v**3 * (v**2 + sign * z)
    b = v**2 * (v**4 + sign * g**2 * z)
    c = v[0] ** 3 * v[1] ** 3
    d = -g * v**3 * v[::-1] ** 2
    return ExpCoefficientTable(a, b, complex(c), d)


def _sh(x):
    """sinh(x) * exp(-x)."""
    return -np.expm1(-2 * x) / 2


def _ch(x):
    """cosh(x) * exp(-x)."""
    return (1 + np.exp(-2 * x)) / 2


class DegenerateParameters(ValueError):
    pass


@dataclass
class ExpProfile:
    roots: ExponentialRoots
    t: float
    s: np.ndarray
    f: np.ndarray
    d0: complex  # f'(0)
    dt: complex  # f'(t)

    def at(self, s):
        return exp_f_values(self.roots, self.t, s)


def _scaled_parts(roots, t):
    tab = coefficient_table(roots)
    v = roots.roots
    vb = v[::-1]
    R = tab.a[::-1] * _ch(vb * t) + tab.b[::-1] * _sh(vb * t)
    U = tab.d * _sh(vb * t) - tab.c * _ch(vb * t)
    tail = np.exp(-(v[0] + v[1]) * t)
    # f(0) = 1 fixes the normalization: one c per root, 2c in total
    den = np.sum(tab.c * tail + R * _sh(v * t) + U * _ch(v * t))
    if not np.isfinite(den) or abs(den) < 1e-300:
        raise DegenerateParameters(
            f"vanishing denominator for gamma={roots.gamma}, omega={roots.omega}, t={t}")
    return tab, v, vb, R, U, tail, den


def exp_f_values(roots, t, s):
    tab, v, vb, R, U, tail, den = _scaled_parts(roots, t)
    s = np.asarray(s, dtype=float)[..., None]
    num = (np.exp(-v * s) * (R * _sh(v * (t - s)) + U * _ch(v * (t - s)))
           - np.exp(vb * s - (v[0] + v[1]) * t) * (tab.d * _sh(vb * s) - tab.c * _ch(vb * s)))
    return num.sum(axis=-1) / den


def exp_f_profile(roots, t, s=None):
    """f(s) on ``s`` (default: 201 points) plus f'(0) and f'(t)."""
    if s is None:
        s = np.linspace(0.0, t, 201)
    tab, v, vb, R, U, tail, den = _scaled_parts(roots, t)
    d0 = -np.sum(v * (R * _ch(v * t) + U * _sh(v * t) + tab.d[::-1] * tail)) / den
    dt = -np.sum(v * (R * np.exp(-v * t)
                      + np.exp(-vb * t) * (tab.d[::-1] * _ch(v * t) - tab.c * _sh(v * t)))) / den
    return ExpProfile(roots, float(t), np.asarray(s, float), exp_f_values(roots, t, s), complex(d0), complex(dt))


def exp_fbar(roots, s, l):
    """Cauchy function of the fourth-order operator: (1/zeta) sum_k +-sinh(v_k(s-l))/v_k."""
    if roots.omega == 0:
        raise ValueError("fbar is singular when omega = 0 (v2 = 0)")
    x = np.subtract(s, l)
    v1, v2 = roots.v1, roots.v2
    return (np.sinh(v1 * x) / v1 - np.sinh(v2 * x) / v2) / roots.zeta


def homogeneous_basis(roots, s, order=0):
    """order-th derivative of [sinh v1 s, sinh v2 s, cosh v1 s, cosh v2 s]."""
    s = np.asarray(s, dtype=float)[..., None]
    v = np.concatenate([roots.roots, roots.roots])
    sh, ch = np.sinh(v * s), np.cosh(v * s)
    if order % 2 == 0:
        val = np.concatenate([sh[..., :2], ch[..., 2:]], axis=-1)
    else:
        val = np.concatenate([ch[..., :2], sh[..., 2:]], axis=-1)
    return val * v**order


def decaying_basis(roots, s, t, order=0):
    """order-th derivative of [e^{-v1 s}, e^{-v2 s}, e^{-v1 (t-s)}, e^{-v2 (t-s)}].

    Same span as :func:`homogeneous_basis` but bounded by 1 on [0, t].
    """
    s = np.asarray(s, dtype=float)[..., None]
    v = roots.roots
    left = (-v) ** order * np.exp(-v * s)
    right = v**order * np.exp(-v * (t - s))
    return np.concatenate([left, right], axis=-1)


@dataclass
class ParticularSolution:
    s: np.ndarray
    values: np.ndarray
    d_t: complex  # h^P'(t)
    corrected: bool


def _two_sided_moments(roots, s, q, n_gauss=8):
    """L_j(s) = int_0^s e^{-v_j (s-l)} q dl and R_j(s) = int_s^t e^{-v_j (l-s)} q dl.

    Decaying recursions over grid intervals, Gauss-Legendre inside each one.
    """
    x, wts = np.polynomial.legendre.leggauss(n_gauss)
    eps = s[1] - s[0]
    v = roots.roots
    n = s.size
    nodes = s[:-1, None] + eps * (x[None, :] + 1) / 2  # (n-1, g)
    ql = q(nodes)[..., None]  # (n-1, g, 1)
    wq = eps / 2 * wts[None, :, None] * ql
    loc_l = np.sum(wq * np.exp(-v * (s[1:, None, None] - nodes[..., None])), axis=1)
    loc_r = np.sum(wq * np.exp(-v * (nodes[..., None] - s[:-1, None, None])), axis=1)
    decay = np.exp(-v * eps)
    L = np.zeros((n, 2), dtype=complex)
    R = np.zeros((n, 2), dtype=complex)
    for i in range(n - 1):
        L[i + 1] = decay * L[i] + loc_l[i]
    for i in range(n - 2, -1, -1):
        R[i] = decay * R[i + 1] + loc_r[i]
    return L, R


def exp_particular_h(roots, noise, lam=0.25, mass=1.0, hbar=1.0, corrected=True):
    """Particular solution h^P with h^P(0) = 0 for a smooth test noise.

    ``corrected=False`` gives the Cauchy-kernel form
    K int_0^s fbar_s(l) (w'' - gamma^2 w) dl, K = -i sqrt(lam) hbar / m, which
    solves the fourth-order equation with zero data at s = 0 but in general
    misses the two endpoint conditions tying it to the integral equation.
    ``corrected=True`` instead fixes h^P(0) = h^P'(0) = 0 together with

        h''' - gamma h'' = F' - gamma F   at s = 0,
        h''' + gamma h'' = F' + gamma F   at s = t,     F = K w,

    so h = h^P - h^P(t) f(t - s) solves the integral equation.  Both are built
    from a bounded whole-line particular solution plus a bounded homogeneous
    part, which avoids the e^{v1 t} growth of the Cauchy kernel.
    """
    if not isinstance(noise, NoisePath) or not noise.smooth:
        raise TypeError("closed-form h needs a smooth test noise with exact w''; "
                        "use the boundary-value solver for sampled paths")
    g = roots.gamma
    s = noise.t
    t = s[-1]
    K = -1j * math.sqrt(lam) * hbar / mass

    def q(l):
        return noise.d2(l) - g**2 * noise.func(l)

    L, R = _two_sided_moments(roots, s, q)
    v = roots.roots
    sgn = np.array([1.0, -1.0]) / roots.zeta
    p = -(L + R) / (2 * v)  # (p_j'' - v_j^2 p_j) = q
    dp = (L - R) / 2
    derivs = [K * (p @ sgn), K * (dp @ sgn), K * ((v**2 * p) @ sgn), K * ((v**2 * dp) @ sgn)]

    phi0 = [decaying_basis(roots, 0.0, t, j) for j in range(4)]
    phit = [decaying_basis(roots, t, t, j) for j in range(4)]
    if corrected:
        F0, dF0 = K * noise.func(0.0), K * noise.d1(0.0)
        Ft, dFt = K * noise.func(t), K * noise.d1(t)
        rows = [phi0[0], phi0[1], phi0[3] - g * phi0[2], phit[3] + g * phit[2]]
        rhs = [-derivs[0][0], -derivs[1][0],
               dF0 - g * F0 - (derivs[3][0] - g * derivs[2][0]),
               dFt + g * Ft - (derivs[3][-1] + g * derivs[2][-1])]
    else:
        rows = phi0
        rhs = [-d[0] for d in derivs]
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    values = derivs[0] + decaying_basis(roots, s, t) @ coef
    d_t = derivs[1][-1] + phit[1] @ coef
    return ParticularSolution(s, values, complex(d_t), corrected)


def exp_h(roots, noise, lam=0.25, mass=1.0, hbar=1.0, corrected=True):
    """Full h(s) = h^P(s) - h^P(t) f(t - s) on the noise grid."""
    hp = exp_particular_h(roots, noise, lam, mass, hbar, corrected)
    t = noise.grid.t_final
    return hp.values - hp.values[-1] * exp_f_values(roots, t, t - noise.t)


def asymptotic_alpha(gamma=None, lam=0.25, mass=1.0, hbar=1.0):
    """Long-time Gaussian width parameter; ``gamma=None`` is the white limit.

    alpha_inf = -(i m / 2 hbar)(v1 + v2 - gamma), with v1 - gamma rewritten
    as -v2^2 / (v1 + gamma) for accuracy at large gamma.
    """
    if gamma is None:
        return np.sqrt(lam * mass / (2j * hbar))
    roots = exp_roots(gamma, _omega(lam, mass, hbar))
    v1, v2 = roots.v1, roots.v2
    return -1j * mass / (2 * hbar) * (v2 - v2**2 / (v1 + gamma))


# --- arbitrary precision endpoint derivatives -------------------------------

def _mp_exp_derivs(gamma, omega, t):
    import mpmath as mp

    g, om, t = mp.mpf(gamma), mp.mpf(omega), mp.mpf(t)
    zeta = mp.sqrt(g**4 - 2j * g**2 * om**2)
    v = [mp.sqrt((g**2 + zeta) / 2), mp.sqrt((g**2 - zeta) / 2)]
    sign = [1, -1]
    a = [g * v[k] ** 3 * (v[k] ** 2 + sign[k] * zeta) for k in range(2)]
    b = [v[k] ** 2 * (v[k] ** 4 + sign[k] * g**2 * zeta) for k in range(2)]
    c = v[0] ** 3 * v[1] ** 3
    d = [-g * v[k] ** 3 * v[1 - k] ** 2 for k in range(2)]
    r = [a[1 - k] * mp.cosh(v[1 - k] * t) + b[1 - k] * mp.sinh(v[1 - k] * t) for k in range(2)]
    u = [d[k] * mp.sinh(v[1 - k] * t) - c * mp.cosh(v[1 - k] * t) for k in range(2)]
    den = sum(c + r[k] * mp.sinh(v[k] * t) + u[k] * mp.cosh(v[k] * t) for k in range(2))
    d0 = -sum(v[k] * (r[k] * mp.cosh(v[k] * t) + u[k] * mp.sinh(v[k] * t) + d[1 - k]) for k in range(2)) / den
    dt = -sum(v[k] * (r[k] + d[1 - k] * mp.cosh(v[k] * t) - c * mp.sinh(v[k] * t)) for k in range(2)) / den
    return d0, dt


def _mp_white_derivs(omega, t):
    import mpmath as mp

    v = (1 + 1j) * mp.mpf(omega) / 2
    x = v * mp.mpf(t)
    return -v * mp.cosh(x) / mp.sinh(x), -v / mp.sinh(x)


def endpoint_derivs_mp(omega, t, gamma=None, dps=30, rtol=1e-14):
    """(f'(0), f'(t), dps): mpmath values, precision raised until two levels agree.

    Callers should keep working at the returned ``dps``.
    """
    import mpmath as mp

    fn = (lambda: _mp_white_derivs(omega, t)) if gamma is None else (lambda: _mp_exp_derivs(gamma, omega, t))
    with mp.workdps(dps):
        prev = fn()
    while True:
        dps += 20
        with mp.workdps(dps):
            cur = fn()
            ok = all(abs(x - y) <= rtol * abs(y) for x, y in zip(prev, cur))
        if ok or dps > 2000:
            return cur[0], cur[1], dps
        prev = cur
