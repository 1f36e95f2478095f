"""Physical constants, couplings, unit scales and noise correlation kernels.

Internally everything runs in natural units where hbar = m = 1 and time is
measured in 1/omega, omega = 2 sqrt(hbar lambda / m).  In those units the
coupling is always lambda = 1/4 and the length unit is
ell = sqrt(hbar / (m omega)).  SI values only appear at the API boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

HBAR = 1.0546e-34  # J s
NUCLEON_MASS = 1.67e-27  # kg
LAMBDA0_GRW = 5.00e-3  # m^-2 s^-1
LAMBDA0_ADLER = 1.12e6  # m^-2 s^-1
R_C = 1e-7  # m

LAMBDA0_PRESETS = {"grw": LAMBDA0_GRW, "adler": LAMBDA0_ADLER}

PSD_RTOL = 1e-10


def derive_coupling(m, m0, lambda0):
    """Collapse coupling of a body of mass ``m``: lambda = (m / m0) lambda0."""
    if m <= 0 or m0 <= 0 or lambda0 <= 0:
        raise ValueError(f"couplings need positive inputs, got m={m}, m0={m0}, lambda0={lambda0}")
    return (m / m0) * lambda0


def convert_legacy_couplings(lambda_grw=None, gamma_csl=None, r_c=R_C, rtol=1e-6):
    """lambda0 from the GRW rate (s^-1) and/or the CSL strength (m^3 s^-1).

    alpha = 1/r_c**2;  lambda0 = alpha*lambda_grw/2 = alpha**2.5*gamma_csl/(16 pi**1.5).
    When both constants are supplied they must agree to ``rtol``.
    """
    if r_c <= 0:
        raise ValueError("r_c must be positive")
    alpha = 1.0 / r_c**2
    routes = []
    if lambda_grw is not None:
        if lambda_grw <= 0:
            raise ValueError("lambda_grw must be positive")
        routes.append(alpha * lambda_grw / 2)
    if gamma_csl is not None:
        if gamma_csl <= 0:
            raise ValueError("gamma_csl must be positive")
        routes.append(alpha**2.5 * gamma_csl / (16 * math.pi**1.5))
    if not routes:
        raise ValueError("give lambda_grw, gamma_csl or both")
    if len(routes) == 2 and abs(routes[0] - routes[1]) > rtol * max(abs(routes[0]), abs(routes[1])):
        raise ValueError(f"inconsistent legacy couplings: {routes[0]:.6g} vs {routes[1]:.6g}")
    return routes[0]


@dataclass(frozen=True)
class PhysicalParams:
    mass: float
    lambda0: float
    m0: float = NUCLEON_MASS
    hbar: float = HBAR

    def __post_init__(self):
        if not self.mass > 0 or not self.m0 > 0 or not self.hbar > 0:
            raise ValueError("mass, m0 and hbar must be positive")
        if not self.lambda0 >= 0:
            raise ValueError("lambda0 must be non-negative")

    @classmethod
    def natural(cls, lam=0.25):
        """hbar = m = 1 with the given coupling (0.25 makes omega = 1)."""
        return cls(mass=1.0, lambda0=lam, m0=1.0, hbar=1.0)

    @property
    def lam(self):
        return (self.mass / self.m0) * self.lambda0

    @property
    def omega(self):
        return 2.0 * math.sqrt(self.hbar * self.lam / self.mass)

    def with_mass(self, mass):
        return PhysicalParams(mass=mass, lambda0=self.lambda0, m0=self.m0, hbar=self.hbar)


@dataclass(frozen=True)
class UnitScales:
    """Conversion factors between SI and natural units for one parameter set.

    ``free_particle`` marks lambda = 0, where no omega-based scale exists; the
    time unit then defaults to one second and the length unit follows from it.
    """

    params: PhysicalParams
    omega: float
    time: float
    length: float
    free_particle: bool = False

    # SI -> natural
    def t(self, t_si):
        return t_si / self.time

    def x(self, x_si):
        return x_si / self.length

    def rate(self, r_si):
        return r_si * self.time

    def alpha(self, a_si):
        return a_si * self.length**2

    def beta(self, b_si):
        return b_si * self.length

    def momentum(self, p_si):
        return p_si * self.length / self.params.hbar

    def energy(self, e_si):
        return e_si * self.time / self.params.hbar

    # natural -> SI
    def t_si(self, t):
        return t * self.time

    def x_si(self, x):
        return x * self.length

    def rate_si(self, r):
        return r / self.time

    def alpha_si(self, a):
        return a / self.length**2

    def beta_si(self, b):
        return b / self.length

    def momentum_si(self, p):
        return p * self.params.hbar / self.length

    def energy_si(self, e):
        return e * self.params.hbar / self.time

    @property
    def natural_params(self):
        lam = 0.0 if self.free_particle else self.params.lam * self.length**2 * self.time
        return PhysicalParams.natural(lam)


def to_natural(params):
    lam = params.lam
    if lam > 0:
        omega = params.omega
        time = 1.0 / omega
        free = False
    else:
        omega, time, free = 0.0, 1.0, True
    length = math.sqrt(params.hbar * time / params.mass)
    return UnitScales(params=params, omega=omega, time=time, length=length, free_particle=free)


def from_natural(scales):
    """Recover the SI parameter set a :class:`UnitScales` was built from.

    The natural coupling together with the stored scales fixes lambda; mass,
    m0 and hbar are carried by the scales themselves.
    """
    p = scales.params
    lam = scales.natural_params.lam / (scales.length**2 * scales.time)
    lambda0 = lam * p.m0 / p.mass
    return PhysicalParams(mass=p.mass, lambda0=lambda0, m0=p.m0, hbar=p.hbar)


# --- time grid -------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("need at least two steps")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    @property
    def eps(self):
        return self.t_final / self.n_steps

    @property
    def nodes(self):
        return np.arange(self.n_steps + 1) * self.eps

    def prefix(self, n):
        """Grid covering the first ``n`` steps, same spacing."""
        return TimeGrid(n * self.eps, n)


def trapezoid_weights(n_steps, eps):
    w = np.full(n_steps + 1, eps)
    w[0] = w[-1] = eps / 2
    return w


# --- correlation kernels ---------------------------------------------------

@dataclass(frozen=True)
class White:
    """D(t, s) = delta(t - s); on a grid, covariance delta_kj / eps."""

    name = "white"
    tti = True

    def __call__(self, t, s):
        raise TypeError("white-noise kernel is a distribution and has no pointwise value")

    def matrix(self, grid):
        return np.eye(grid.n_steps + 1) / grid.eps

    def integral_to(self, t):
        """int_0^t D(t, s) ds; the delta sits on the endpoint and contributes half."""
        return 0.5 * np.ones_like(np.asarray(t, dtype=float))

    def scaled(self, time_unit):
        return self


@dataclass(frozen=True)
class Exponential:
    """D(t, s) = (gamma / 2) exp(-gamma |t - s|)."""

    gamma: float
    name = "exponential"
    tti = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def __call__(self, t, s):
        return 0.5 * self.gamma * np.exp(-self.gamma * np.abs(np.subtract(t, s)))

    def matrix(self, grid):
        t = grid.nodes
        return self(t[:, None], t[None, :])

    def integral_to(self, t):
        return 0.5 * -np.expm1(-self.gamma * np.asarray(t, dtype=float))

    def scaled(self, time_unit):
        """Same kernel with time measured in units of ``time_unit`` seconds."""
        return Exponential(self.gamma * time_unit)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Kernel given as a symmetric PSD matrix on a uniform node set."""

    nodes: np.ndarray
    values: np.ndarray
    name = "tabulated"
    _tti: bool = field(default=False, init=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (nodes.size, nodes.size):
            raise ValueError("values must be square and match nodes")
        scale = max(np.abs(values).max(), 1e-300)
        if np.abs(values - values.T).max() > PSD_RTOL * scale:
            raise ValueError("tabulated kernel is not symmetric")
        lo = np.linalg.eigvalsh(values).min()
        if lo < -PSD_RTOL * np.linalg.norm(values, 2):
            raise ValueError(f"tabulated kernel is not positive-semidefinite (min eigenvalue {lo:.3g})")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        first = values[0]
        toeplitz = np.allclose(values, _toeplitz(first), rtol=0, atol=1e-12 * scale)
        object.__setattr__(self, "_tti", bool(toeplitz))

    @classmethod
    def from_kernel(cls, kernel, grid):
        return cls(grid.nodes, kernel.matrix(grid))

    @property
    def tti(self):
        return self._tti

    def __call__(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        lo, hi = self.nodes[0], self.nodes[-1]
        tol = 1e-12 * max(abs(hi), 1.0)
        if np.any(t < lo - tol) or np.any(t > hi + tol) or np.any(s < lo - tol) or np.any(s > hi + tol):
            raise ValueError("tabulated kernel evaluated outside its grid")
        h = self.nodes[1] - self.nodes[0]
        ft = np.clip((t - lo) / h, 0, self.nodes.size - 1)
        fs = np.clip((s - lo) / h, 0, self.nodes.size - 1)
        i0 = np.minimum(np.floor(ft).astype(int), self.nodes.size - 2)
        j0 = np.minimum(np.floor(fs).astype(int), self.nodes.size - 2)
        a = ft - i0
        b = fs - j0
        v = self.values
        return ((1 - a) * (1 - b) * v[i0, j0] + a * (1 - b) * v[i0 + 1, j0]
                + (1 - a) * b * v[i0, j0 + 1] + a * b * v[i0 + 1, j0 + 1])

    def matrix(self, grid):
        t = grid.nodes
        if t.size == self.nodes.size and np.allclose(t, self.nodes, rtol=0, atol=1e-12 * max(t[-1], 1.0)):
            return self.values.copy()
        if t.size <= self.nodes.size and np.allclose(t, self.nodes[: t.size], rtol=0, atol=1e-12 * max(t[-1], 1.0)):
            return self.values[: t.size, : t.size].copy()
        return self(t[:, None], t[None, :])

    def integral_to(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            s = np.linspace(0.0, ti, 401)
            out[i] = trapezoid(self(np.full_like(s, ti), s), s) if ti > 0 else 0.0
        return out

    def scaled(self, time_unit):
        return Tabulated(self.nodes / time_unit, self.values * time_unit)


def _toeplitz(first):
    n = first.size
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return first[idx]


def kernel_eval(kernel, t, s):
    return kernel(t, s)


def make_kernel(name, gamma=None):
    if name == "white":
        return White()
    if name == "exponential":
        if gamma is None:
            raise ValueError("exponential kernel needs gamma")
        return Exponential(float(gamma))
    raise ValueError(f"unknown kernel {name!r}")
