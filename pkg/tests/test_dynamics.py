import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmupl import closed_form as cf
from qmupl.dynamics import (T_FLOOR, DegenerateProfileError, GaussianState, NonNormalizableError, Profile,
                            coefficients_for, discrete_coefficients, f_profile, free_alpha, g_profile,
                            greens_coefficients, h_profile, mass_rescale_check, observables, propagate_batch,
                            propagate_gaussian, sse_coefficients, sse_consistency, write_trajectory)
from qmupl.bvp import assemble_system
from qmupl.noise import sample_path, smooth_test_noise
from qmupl.params import LAMBDA0_GRW, NUCLEON_MASS, Exponential, PhysicalParams, Tabulated, TimeGrid, White


def test_free_limit_coefficients():
    for t in (0.5, 2.0):
        co = coefficients_for(White(), TimeGrid(t, 100), lam=1e-10)
        assert co.A == pytest.approx(1 / (2j * t), rel=1e-6)
        assert co.B == pytest.approx(1 / (1j * t), rel=1e-6)
        assert co.A_tilde == co.A


def test_zero_noise_terms_vanish():
    grid = TimeGrid(2.0, 200)
    zero = smooth_test_noise(grid, "polynomial", coeffs=[0.0])
    co = coefficients_for(Exponential(1.0), grid, zero)
    assert co.C == 0 and co.D == 0 and co.E == 0


def test_white_coefficients_from_solver_match_closed_form():
    t, grid = 3.0, TimeGrid(3.0, 2000)
    noise = smooth_test_noise(grid, "sinusoid", nu=1.1, amplitude=0.6, phase=0.3)
    num = coefficients_for(White(), grid, noise, method="bvp")
    ws = cf.white_solution(t)
    for got, want in ((num.A, ws.A), (num.B, ws.B), (num.C, ws.C(noise)), (num.D, ws.D(noise)),
                      (num.E, ws.E_nested(noise))):
        assert abs(got - want) < 1e-4 * max(abs(want), 1e-3)


def test_grid_mismatch_rejected():
    f = f_profile(Exponential(1.0), TimeGrid(1.0, 50))
    noise = smooth_test_noise(TimeGrid(1.0, 60), "sinusoid")
    with pytest.raises(ValueError, match="grid"):
        greens_coefficients(f, noise=noise)


def test_non_tti_profiles_use_solver():
    grid = TimeGrid(2.0, 80)
    tab = Tabulated(grid.nodes, Exponential(1.0).matrix(grid) * np.outer(1 + 0.1 * grid.nodes, 1 + 0.1 * grid.nodes))
    assert not tab.tti
    g = g_profile(tab, grid)
    assert g.values[0] == 0 and g.values[-1] == 1
    with pytest.raises(ValueError):
        f_profile(tab, grid, method="closed")


def test_identity_below_and_near_zero_time():
    st0 = GaussianState(0.5, 0.2 + 0.1j)
    tiny = coefficients_for(White(), TimeGrid(T_FLOOR / 2, 10))
    assert propagate_gaussian(st0, tiny) is st0
    short = coefficients_for(Exponential(1.0), TimeGrid(1e-6, 10))
    out = propagate_gaussian(st0, short)
    assert out.alpha == pytest.approx(st0.alpha, abs=1e-5)
    assert out.beta == pytest.approx(st0.beta, abs=1e-5)


@given(st.floats(0.1, 5), st.floats(0.05, 5))
def test_free_spreading(alpha0, t):
    grid = TimeGrid(t, 50)
    f = f_profile(Exponential(1.0), grid, lam=0.0, method="bvp")
    out = propagate_gaussian(GaussianState(alpha0), greens_coefficients(f, lam=0.0))
    assert out.alpha == pytest.approx(free_alpha(alpha0, t), rel=1e-9)


def test_white_long_time_limit():
    co = coefficients_for(White(), TimeGrid(60.0, 100))
    out = propagate_gaussian(GaussianState(0.5), co)
    assert out.alpha == pytest.approx(cf.asymptotic_alpha(None), rel=1e-6)


@pytest.mark.parametrize("kernel, gamma", [(White(), None), (Exponential(1.0), 1.0)])
def test_spread_undershoots_then_settles(kernel, gamma):
    # a wide packet shrinks past sigma_inf and then rings down onto it
    times = np.linspace(0.05, 50, 1000)
    sig = np.array([observables(propagate_gaussian(GaussianState(0.01), coefficients_for(kernel, TimeGrid(t, 50))))
                    .sigma for t in times])
    sigma_inf = 1 / (2 * math.sqrt(cf.asymptotic_alpha(gamma).real))
    first_min = int(np.argmax(np.diff(sig) > 0))
    assert first_min > 0 and np.all(np.diff(sig[: first_min + 1]) < 0)
    assert sig[first_min] < sigma_inf
    dev = np.abs(sig / sigma_inf - 1)
    assert dev[first_min:500].max() > dev[500:].max()
    assert sig[-1] == pytest.approx(sigma_inf, rel=1e-2)


def test_spread_is_noise_independent_bitwise():
    grid = TimeGrid(3.0, 300)
    kern = Exponential(1.0)
    alphas = set()
    for seed in range(10):
        noise = sample_path(kern, grid, seed)
        co = coefficients_for(kern, grid, noise)
        alphas.add(propagate_gaussian(GaussianState(0.5), co).alpha)
    assert len(alphas) == 1


def test_observables_examples():
    o = observables(GaussianState(0.5, 0.4))
    assert o.mean_p == 0 and o.mean_q == pytest.approx(0.4)
    assert o.sigma == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(NonNormalizableError):
        GaussianState(-0.1)


def test_normalized_state_has_unit_norm():
    st0 = GaussianState.normalized(0.7 + 0.2j, 0.3 - 0.5j)
    x = np.linspace(-12, 12, 20001)
    assert np.trapezoid(np.abs(st0(x)) ** 2, x) == pytest.approx(1, rel=1e-10)
    assert st0.log_norm2 == pytest.approx(0, abs=1e-12)


def test_track_norm_needs_prefactor():
    co = coefficients_for(Exponential(1.0), TimeGrid(1.0, 50))
    with pytest.raises(ValueError):
        propagate_gaussian(GaussianState(0.5), co, track_norm=True)


def test_free_propagation_conserves_norm():
    grid = TimeGrid(1.5, 100)
    f = f_profile(Exponential(1.0), grid, lam=0.0, method="bvp")
    co = greens_coefficients(f, lam=0.0, u=1.0)
    out = propagate_gaussian(GaussianState.normalized(0.5, 0.3j), co, track_norm=True)
    assert out.log_norm2 == pytest.approx(0, abs=1e-10)


def test_sse_coefficient_examples():
    grid = TimeGrid(2.0, 400)
    f = f_profile(Exponential(1.0), grid)
    sse = sse_coefficients(f)
    assert abs(sse.b[-1]) < 1e-15 and np.all(sse.c == 0)
    zero = smooth_test_noise(grid, "polynomial", coeffs=[0.0])
    h = h_profile(Exponential(1.0), zero)
    assert np.all(sse_coefficients(f, h, zero).c == 0)
    flat = Profile(grid, f.values, f.d0, 0j)
    with pytest.raises(DegenerateProfileError):
        sse_coefficients(flat)


def test_sse_consistency_second_order():
    noise_fn = lambda g: smooth_test_noise(g, "sinusoid", nu=0.9, amplitude=0.5, phase=0.2)  # noqa: E731
    rep = sse_consistency(Exponential(1.0), noise_fn, GaussianState(0.5, 0.1), 2.0, [0.04, 0.02, 0.01])
    for r in rep.ratios:
        assert r == pytest.approx(4.0, rel=0.1)


def test_mass_rescaling_symmetry():
    p = PhysicalParams(NUCLEON_MASS, LAMBDA0_GRW)
    ell = math.sqrt(p.hbar / (p.mass * p.omega))
    times = np.linspace(0.1, 10, 7) / p.omega
    assert mass_rescale_check(p, Exponential(p.omega), times, ell, NUCLEON_MASS).max_deviation == 0
    assert mass_rescale_check(p, Exponential(p.omega), times, ell, 100 * NUCLEON_MASS).max_deviation < 1e-10


def test_discrete_coefficients_approach_continuum():
    grid = TimeGrid(2.0, 1000)
    kern = Exponential(1.0)
    noise = sample_path(kern, grid, 5)
    dc = discrete_coefficients(assemble_system(kern, grid, 0.25), noise.values[None, :])
    co = coefficients_for(kern, grid, noise)
    for got, want in ((dc.A, co.A), (dc.A_tilde, co.A_tilde), (dc.B, co.B)):
        assert got == pytest.approx(want, rel=1e-5)
    for got, want in ((dc.C[0], co.C), (dc.D[0], co.D), (dc.E[0], co.E)):
        assert abs(got - want) < 1e-2 * max(abs(want), 1e-2)


def test_batch_matches_single_path():
    grid = TimeGrid(2.0, 200)
    kern = Exponential(1.0)
    W = np.array([sample_path(kern, grid, i).values for i in range(4)])
    dc = discrete_coefficients(assemble_system(kern, grid, 0.25), W)
    st0 = GaussianState.normalized(0.5, 0.2j)
    alpha, beta, _ = propagate_batch(st0.alpha, st0.beta, st0.gamma, dc)
    for i in range(4):
        one = propagate_gaussian(st0, dc.path(i))
        assert one.alpha == pytest.approx(alpha) and one.beta == pytest.approx(beta[i])


def test_trajectory_csv(tmp_path):
    states = [GaussianState(0.5), GaussianState(0.4 - 0.1j, 0.2 + 0.3j)]
    write_trajectory(tmp_path / "traj.csv", [0.0, 1.0], states)
    head = (tmp_path / "traj.csv").read_text().splitlines()[0]
    assert head == "t,sigma,mean_q,mean_p,alpha_re,alpha_im,beta_re,beta_im"
