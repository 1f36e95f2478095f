import json

import numpy as np
import pytest

from qmupl.ensemble import (EnsembleConfig, PathStates, analytic_energy, density_matrix, imaginary_noise_compare,
                            run_ensemble, simulate_paths, variance_scaling)
from qmupl.params import Exponential, Tabulated, TimeGrid, White


def config(**kw):
    base = dict(kernel=Exponential(1.0), t_final=2.0, n_steps=200, n_paths=500, seed=12345, record_every=20)
    return EnsembleConfig(**{**base, **kw})


def test_config_validation():
    with pytest.raises(ValueError):
        config(n_paths=0)
    with pytest.raises(ValueError):
        config(xi_mode="other")
    with pytest.raises(ValueError):
        config(alpha0=-1.0)
    with pytest.raises(ValueError):
        config(record_every=7)


@pytest.mark.parametrize("mode", ["unitary", "collapse"])
def test_no_coupling_means_no_fluctuations(mode):
    r = run_ensemble(config(lam=0.0, beta0=1j, xi_mode=mode, n_paths=50))
    assert np.all(r.fluct_q < 1e-12) and np.all(r.fluct_p < 1e-12)
    assert np.allclose(r.mean_q, r.times, atol=1e-10)


@pytest.mark.parametrize("mode", ["unitary", "collapse"])
def test_newtonian_means(mode):
    r = run_ensemble(config(beta0=1j, xi_mode=mode, n_paths=2000))
    t = r.times[1:]
    assert np.all(np.abs(r.mean_q[1:] - t) < 3.5 * r.se_q[1:])
    assert np.all(np.abs(r.mean_p[1:] - 1) < 3.5 * r.se_p[1:])


def test_means_compose_over_fresh_noise():
    # run to t1, restart from the mean state with new noise, compare against one long run (means only)
    t1, t2 = 1.0, 1.0
    first = run_ensemble(config(t_final=t1, n_steps=100, beta0=1j, n_paths=4000, record_every=100))
    q1, p1 = first.mean_q[-1], first.mean_p[-1]
    second = run_ensemble(config(t_final=t2, n_steps=100, beta0=2 * 0.5 * q1 + 1j * p1, n_paths=4000,
                                 record_every=100, seed=999))
    whole = run_ensemble(config(t_final=t1 + t2, n_steps=200, beta0=1j, n_paths=4000, record_every=200))
    se = np.hypot(second.se_q[-1], whole.se_q[-1]) + first.se_q[-1] + t2 * first.se_p[-1]
    assert abs(second.mean_q[-1] - whole.mean_q[-1]) < 4 * se
    assert abs(second.mean_p[-1] - whole.mean_p[-1]) < 4 * (np.hypot(second.se_p[-1], whole.se_p[-1])
                                                            + first.se_p[-1])


def test_collapse_norm_is_a_martingale():
    r = run_ensemble(config(xi_mode="collapse", n_paths=2000))
    st = simulate_paths(config(xi_mode="collapse", n_paths=2000))
    w = np.exp(st.log_norm2)
    se = w.std(axis=0, ddof=1) / np.sqrt(w.shape[0])
    assert np.all(np.abs(r.mean_weight[1:] - 1) < 4 * se[1:])


def test_seed_determinism_and_split_invariance():
    cfg = config(xi_mode="collapse", n_paths=8)
    a, b = simulate_paths(cfg), simulate_paths(cfg)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.log_norm2, b.log_norm2)
    head = simulate_paths(config(xi_mode="collapse", n_paths=5))
    tail = simulate_paths(config(xi_mode="collapse", n_paths=3), start=5)
    assert np.array_equal(np.vstack([head.beta, tail.beta]), a.beta)


def test_report_files_are_reproducible(tmp_path):
    for name in ("a", "b"):
        r = run_ensemble(config(n_paths=50))
        r.to_csv(tmp_path / f"{name}.csv")
        r.to_json(tmp_path / f"{name}.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    data = json.loads((tmp_path / "a.json").read_text())
    assert data["n_paths"] == 50 and len(data["times"]) == 11


def test_analytic_energy_examples():
    t = np.array([0.0, 0.01, 5.0])
    assert np.all(analytic_energy(Exponential(2.0), t, lam=0.0) == 0)
    small = analytic_energy(Exponential(2.0), 1e-3)
    assert small == pytest.approx(0.25 * 2.0 * 1e-6 / 4, rel=1e-3)
    big = analytic_energy(Exponential(1e6), np.array([10.0, 20.0]))
    assert (big[1] - big[0]) / 10 == pytest.approx(0.25 / 2, rel=1e-5)
    assert analytic_energy(White(), 3.0) == pytest.approx(0.25 / 2 * 3.0)


def test_analytic_energy_tabulated_quadrature():
    grid = TimeGrid(3.0, 300)
    tab = Tabulated.from_kernel(Exponential(1.0), grid)
    t = np.array([0.5, 3.0])
    assert np.allclose(analytic_energy(tab, t), analytic_energy(Exponential(1.0), t), rtol=1e-3)


def test_unitary_energy_matches_analytic():
    r = run_ensemble(config(t_final=3.0, n_steps=300, n_paths=3000, record_every=30))
    gain = r.mean_energy - r.mean_energy[0]
    exact = analytic_energy(Exponential(1.0), r.times)
    assert np.all(np.abs(gain[1:] - exact[1:]) < 4 * r.se_energy[1:])


def test_imaginary_noise_without_coupling_is_exact():
    cmp_ = imaginary_noise_compare(config(lam=0.0, n_paths=20, n_steps=50, record_every=50))
    assert cmp_.max_deviation == 0.0


def test_imaginary_noise_small_run():
    cmp_ = imaginary_noise_compare(config(t_final=1.0, n_paths=2000, record_every=200))
    assert cmp_.passed(4.0)
    assert abs(cmp_.trace_collapse - 1) < 4 * cmp_.trace_se_collapse


@pytest.mark.parametrize("x", [1.5, 2.0])
def test_offdiagonal_coherence_decays(x):
    # relative to free evolution, so packet spreading does not mask the noise-induced damping
    noisy = simulate_paths(config(t_final=4.0, n_steps=400, n_paths=2000, record_every=50))
    free = simulate_paths(config(t_final=4.0, n_steps=400, n_paths=1, record_every=50, lam=0.0))
    pts = np.array([-x, x])  # beyond the asymptotic spread of about 1.2
    ratio = [abs(density_matrix(noisy, pts, time_index=i).rho[0, 1])
             / abs(density_matrix(free, pts, time_index=i).rho[0, 1]) for i in range(noisy.times.size)]
    assert ratio[0] == pytest.approx(1.0)
    assert all(b < a for a, b in zip(ratio, ratio[1:]))


def test_density_matrix_is_hermitian_with_unit_trace():
    st = simulate_paths(config(xi_mode="collapse", n_paths=300))
    x = np.linspace(-8, 8, 321)
    rho = density_matrix(st, x).rho
    assert np.allclose(rho, rho.conj().T)
    # trace of the estimate equals the mean norm weight; that weight is checked against 1 elsewhere
    assert np.trapezoid(np.diag(rho).real, x) == pytest.approx(np.exp(st.log_norm2[:, -1]).mean(), rel=1e-6)


def test_variance_scaling_slopes():
    fit = variance_scaling(config(t_final=5.0, n_steps=500, n_paths=2000, record_every=500), [1.0, 100.0])
    assert abs(fit.slope_q + 0.5) < 4 * fit.slope_se
    assert abs(fit.slope_p - 0.5) < 4 * fit.slope_se
    assert abs(fit.slope_v + 0.5) < 4 * fit.slope_se
    with pytest.raises(ValueError):
        variance_scaling(config(), [1.0])


def test_path_states_observables_shape():
    st = PathStates(np.array([0.0]), np.array([0.5 + 0j]), np.array([[0.4 + 0.2j]]), np.zeros((1, 1)),
                    np.zeros(1, bool))
    q, p, e = st.observables(1.0, 1.0)
    assert q[0, 0] == pytest.approx(0.4) and p[0, 0] == pytest.approx(0.2)
