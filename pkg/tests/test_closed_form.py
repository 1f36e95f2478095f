import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad, trapezoid

from qmupl import closed_form as cf
from qmupl.noise import sample_path, smooth_test_noise
from qmupl.params import Exponential, TimeGrid


def basis_fit(roots, t, n=400):
    """Coefficients of f in the bounded homogeneous basis and the fit residual."""
    s = np.linspace(0, t, n)
    f = cf.exp_f_values(roots, t, s)
    M = cf.decaying_basis(roots, s, t)
    coef, *_ = np.linalg.lstsq(M, f, rcond=None)
    return coef, float(np.max(np.abs(M @ coef - f)))


def deriv(roots, t, coef, s, order):
    return cf.decaying_basis(roots, s, t, order) @ coef


# --- white noise ---

def test_white_boundary_values():
    ws = cf.white_solution(2.5)
    f = ws.f(np.array([0.0, 2.5]))
    assert f[0] == pytest.approx(1) and abs(f[1]) < 1e-15


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_white_free_limit(t):
    ws = cf.white_solution(t, lam=1e-10)
    assert ws.A == pytest.approx(1 / (2j * t), rel=1e-6)
    assert ws.B == pytest.approx(1 / (1j * t), rel=1e-6)


def test_white_prefactor_values():
    assert cf.white_solution(1e-9).u() == pytest.approx(1, abs=1e-12)
    assert cf.white_solution(0.0).u() == 1
    v = cf.white_solution(1.0).upsilon
    assert cf.white_solution(1 / abs(v) * abs(v)).u() == pytest.approx(np.sinh(v) / v)


def test_white_rejects_bad_input():
    with pytest.raises(ValueError):
        cf.white_solution(1.0, lam=0.0)
    with pytest.raises(ValueError):
        cf.white_solution(-1.0)


@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0), st.floats(-3, 3))
def test_white_energy_quadratures_agree(nu, amp, phase):
    grid = TimeGrid(3.0, 3000)
    noise = smooth_test_noise(grid, "sinusoid", nu=nu, amplitude=amp, phase=phase)
    ws = cf.white_solution(3.0)
    es = [ws.E_double(noise), ws.E_nested(noise), ws.E_from_D(noise), ws.E_squared(noise)]
    scale = max(abs(e) for e in es)
    assert max(abs(a - b) for a in es for b in es) < 1e-4 * scale


def test_white_zero_noise_terms_vanish():
    grid = TimeGrid(2.0, 100)
    zero = smooth_test_noise(grid, "polynomial", coeffs=[0.0])
    ws = cf.white_solution(2.0)
    assert ws.C(zero) == 0 and ws.D(zero) == 0 and ws.E_nested(zero) == 0
    assert np.all(ws.h(zero) == 0)


# --- exponential roots ---

@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_vieta_and_polynomial(gamma, omega):
    r = cf.exp_roots(gamma, omega)
    assert abs(r.v1**2 + r.v2**2 - gamma**2) < 1e-12 * gamma**2
    assert abs(r.v1**2 * r.v2**2 - 0.5j * gamma**2 * omega**2) < 1e-12 * gamma**2 * omega**2
    for v in r.roots:
        assert r.v1.real > 0 and r.v2.real > 0
        resid = v**4 - gamma**2 * v**2 + 0.5j * gamma**2 * omega**2
        assert abs(resid) < 1e-12 * (gamma**4 + abs(v) ** 4)


def test_roots_without_coupling():
    r = cf.exp_roots(3.0, 0.0)
    assert r.zeta == pytest.approx(9.0) and r.v1 == pytest.approx(3.0) and r.v2 == 0


def test_roots_white_limit():
    r = cf.exp_roots(1e6, 1.0)
    assert r.v2 == pytest.approx((1 + 1j) / 2, rel=1e-6)


def test_roots_reject_bad_input():
    with pytest.raises(ValueError):
        cf.exp_roots(0.0, 1.0)
    with pytest.raises(ValueError):
        cf.exp_roots(1.0, -1.0)


# --- exponential f ---

@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_f_boundaries_and_ode(gamma):
    roots = cf.exp_roots(gamma, 1.0)
    t = 3.0
    prof = cf.exp_f_profile(roots, t, np.array([0.0, t]))
    assert abs(prof.f[0] - 1) < 1e-10 and abs(prof.f[1]) < 1e-10
    coef, fit = basis_fit(roots, t)
    assert fit < 1e-10  # f lies in the span of the fourth-order solutions
    d = [deriv(roots, t, coef, np.array([0.0, t]), k) for k in range(4)]
    assert abs(d[3][0] - gamma * d[2][0]) < 1e-8 * abs(d[3][0]) + 1e-10
    assert abs(d[3][1] + gamma * d[2][1]) < 1e-8 * abs(d[3][1]) + 1e-10
    assert d[1][0] == pytest.approx(prof.d0, rel=1e-8)
    assert d[1][1] == pytest.approx(prof.dt, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("gamma", [0.3, 3.0])
def test_f_solves_integral_equation(gamma):
    roots = cf.exp_roots(gamma, 1.0)
    t = 2.0
    coef, _ = basis_fit(roots, t)
    kern = Exponential(gamma)
    for s in (0.3, 1.0, 1.7):
        f2 = deriv(roots, t, coef, np.array([s]), 2)[0]

        def part(r, fn):
            return kern(s, r) * fn(cf.exp_f_values(roots, t, np.array([r]))[0])

        integral = sum(quad(part, a, b, args=(fn,), epsabs=1e-13, epsrel=1e-12)[0] * c
                       for a, b in ((0, s), (s, t)) for fn, c in ((np.real, 1), (np.imag, 1j)))
        resid = 0.5j * f2 + 0.25 * integral
        assert abs(resid) < 1e-6 * (abs(f2) + 1)


def test_f_time_reversal_solves_g_problem():
    from qmupl.bvp import BoundaryProblem, assemble_system, solve_boundary_value

    g = TimeGrid(3.0, 2000)
    roots = cf.exp_roots(1.0, 1.0)
    g_closed = cf.exp_f_values(roots, 3.0, 3.0 - g.nodes)
    g_bvp = solve_boundary_value(assemble_system(Exponential(1.0), g, 0.25), BoundaryProblem.g()).values
    assert np.max(np.abs(g_closed - g_bvp)) < 1e-4


def test_f_stays_finite_for_long_times():
    prof = cf.exp_f_profile(cf.exp_roots(50.0, 1.0), 400.0)
    assert np.all(np.isfinite(prof.f)) and np.isfinite(prof.d0) and np.isfinite(prof.dt)


def test_white_limit_family_monotone():
    t = 3.0
    ws = cf.white_solution(t)
    s = np.linspace(0, t, 301)
    gaps_f, gaps_d, gaps_a = [], [], []
    for g in (10.0, 100.0, 1000.0):
        p = cf.exp_f_profile(cf.exp_roots(g, 1.0), t, s)
        gaps_f.append(np.max(np.abs(p.f - ws.f(s))))
        gaps_d.append(abs(p.d0 - ws.f_prime0()) + abs(p.dt - ws.f_primet()))
        gaps_a.append(abs(cf.asymptotic_alpha(g) - cf.asymptotic_alpha(None)))
    for gaps in (gaps_f, gaps_d, gaps_a):
        assert gaps[0] > gaps[1] > gaps[2]


def test_endpoint_derivatives_mp_match_float():
    roots = cf.exp_roots(2.0, 1.0)
    p = cf.exp_f_profile(roots, 3.0)
    d0, dt, dps = cf.endpoint_derivs_mp(1.0, 3.0, gamma=2.0)
    assert complex(d0) == pytest.approx(p.d0, rel=1e-10)
    assert complex(dt) == pytest.approx(p.dt, rel=1e-10)
    w0, wt, _ = cf.endpoint_derivs_mp(1.0, 3.0)
    ws = cf.white_solution(3.0)
    assert complex(w0) == pytest.approx(ws.f_prime0(), rel=1e-12)
    assert complex(wt) == pytest.approx(ws.f_primet(), rel=1e-12)


# --- Cauchy function ---

def test_fbar_initial_data():
    r = cf.exp_roots(1.5, 1.0)
    s, h = 0.7, 1e-3
    assert cf.exp_fbar(r, s, s) == 0
    vals = [cf.exp_fbar(r, s + k * h, s) for k in (-2, -1, 0, 1, 2)]
    d1 = (vals[3] - vals[1]) / (2 * h)
    d2 = (vals[3] - 2 * vals[2] + vals[1]) / h**2
    d3 = (vals[4] - 2 * vals[3] + 2 * vals[1] - vals[0]) / (2 * h**3)
    # central-difference truncation: d1 carries h^2/6 * fbar''' = 1.7e-7
    assert abs(d1) < 1e-6 and abs(d2) < 1e-8 and abs(d3 - 1) < 1e-5


def test_fbar_solves_homogeneous_equation():
    r = cf.exp_roots(1.5, 1.0)
    x = np.linspace(0.1, 2.0, 7)
    v = np.array([r.v1, r.v2])
    # each sinh(v x) term satisfies y'''' - gamma^2 y'' + (i/2) gamma^2 omega^2 y = 0
    terms = np.sinh(np.outer(x, v)) / v
    lhs = terms * (v**4 - r.gamma**2 * v**2 + 0.5j * r.gamma**2)
    assert np.max(np.abs(lhs)) < 1e-12


def test_fbar_needs_coupling():
    with pytest.raises(ValueError):
        cf.exp_fbar(cf.exp_roots(1.0, 0.0), 1.0, 0.5)


# --- particular solution ---

def test_particular_zero_noise():
    grid = TimeGrid(2.0, 200)
    zero = smooth_test_noise(grid, "polynomial", coeffs=[0.0])
    hp = cf.exp_particular_h(cf.exp_roots(1.0, 1.0), zero)
    assert np.all(hp.values == 0) and hp.d_t == 0


@pytest.mark.parametrize("gamma", [0.5, 4.0])
def test_full_h_solves_integral_equation(gamma):
    t, n = 2.0, 4000
    grid = TimeGrid(t, n)
    noise = smooth_test_noise(grid, "sinusoid", nu=1.7, amplitude=0.8, phase=0.2)
    h = cf.exp_h(cf.exp_roots(gamma, 1.0), noise)
    assert abs(h[0]) < 1e-12 and abs(h[-1]) < 1e-10
    s = grid.nodes
    h2 = np.gradient(np.gradient(h, s, edge_order=2), s, edge_order=2)
    D = Exponential(gamma).matrix(grid)
    conv = trapezoid(D * h[None, :], s, axis=1)
    resid = 0.5j * h2 + 0.25 * conv - 0.25 * noise.values
    inner = slice(n // 10, -n // 10)
    assert np.max(np.abs(resid[inner])) < 1e-5 * np.max(np.abs(noise.values))


def test_particular_rejects_sampled_noise():
    grid = TimeGrid(1.0, 50)
    with pytest.raises(TypeError, match="boundary-value"):
        cf.exp_particular_h(cf.exp_roots(1.0, 1.0), sample_path(Exponential(1.0), grid, 0))


# --- asymptotics ---

def test_asymptotic_white_limit():
    target = cf.asymptotic_alpha(None)
    assert abs(cf.asymptotic_alpha(1e6) - target) < 1e-6 * abs(target)
    assert target == pytest.approx(np.sqrt(0.25 / 2j))


def test_asymptotic_vanishes_without_coupling():
    a_small = cf.asymptotic_alpha(1.0, lam=1e-12)
    assert abs(a_small) < 1e-5


@given(st.floats(1e-3, 1e4))
def test_asymptotic_normalizable(gamma):
    assert cf.asymptotic_alpha(gamma).real > 0
