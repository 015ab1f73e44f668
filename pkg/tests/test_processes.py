import math

import numpy as np
import pytest
from helpers import chi2_pvalue, cov_within, mean_within, var_within
from scipy import stats

from fcount.distributions import (
    pmf_fppk,
    pmf_nppk_increment,
    pmf_polya_aeppli_increment,
    pmf_subordinated,
    trunc_geom_severity,
)
from fcount.errors import DomainError
from fcount.processes import (
    CountGrid,
    ProcessSpec,
    SamplePath,
    ensemble,
    simulate,
    simulate_fnppk,
    simulate_fpak,
    simulate_fppk,
    simulate_fppk_renewal_path,
    simulate_nfpak,
    simulate_npak,
    simulate_nppk,
    simulate_pak,
    simulate_ppk,
    worker_count,
)
from fcount.rates import Constant, Makeham, Table, Weibull, cum_mass
from fcount.sampling import RngStream


def pak_moments(k, rho, lam_t):
    mean = lam_t * (sum(rho**j for j in range(k)) - k * rho**k) / (1 - rho**k)
    var = lam_t / (1 - rho**k) * (sum((2 * j + 1) * rho**j for j in range(k)) - k**2 * rho**k)
    return mean, var


def ey(alpha, t, nu=1.0):
    return math.gamma(nu + 1) / math.gamma(alpha * nu + 1) * t ** (alpha * nu)


# ---------------------------------------------------------------- types


def test_process_spec_validation():
    ProcessSpec("fppk", 2, lam=1.0, alpha=0.5)
    assert ProcessSpec("nfpak", 1, rate=Constant(1.0), rho=0.2, alpha=1.0).family == "NFPAk"
    bad = [
        dict(family="PPk", k=2),
        dict(family="PPk", k=0, lam=1.0),
        dict(family="PPk", k=2, lam=1.0, rho=0.3),
        dict(family="PAk", k=2, lam=1.0),
        dict(family="FPPk", k=2, lam=1.0),
        dict(family="FPPk", k=2, lam=1.0, alpha=1.5),
        dict(family="NPPk", k=2, lam=1.0),
        dict(family="NPPk", k=2, rate=Constant(1.0), lam=1.0),
        dict(family="XPk", k=2, lam=1.0),
    ]
    for kw in bad:
        with pytest.raises(DomainError):
            ProcessSpec(**kw)


def test_path_types_enforce_invariants():
    p = SamplePath([0.5, 1.0], [2, 1], 2.0)
    np.testing.assert_array_equal(p.counts_at([0, 0.5, 0.9, 2.0]), [0, 2, 2, 3])
    with pytest.raises(DomainError):
        SamplePath([1.0, 0.5], [1, 1], 2.0)
    with pytest.raises(DomainError):
        SamplePath([0.5, 3.0], [1, 1], 2.0)
    with pytest.raises(DomainError):
        CountGrid([0.0, 1.0], [1, 2])
    with pytest.raises(DomainError):
        CountGrid([0.0, 1.0], [0, -1])


def test_jumps_bounded_by_k():
    for i in range(200):
        p = simulate_ppk(RngStream(1, i), 3, 1.0, 5.0)
        assert np.all((p.jump_sizes >= 1) & (p.jump_sizes <= 3))
        q = simulate_pak(RngStream(1, i), 4, 0.6, 2.0, 5.0)
        assert np.all((q.jump_sizes >= 1) & (q.jump_sizes <= 4))


# ---------------------------------------------------------------- PPk / NPPk


def test_ppk_tiny_horizon_empty():
    empty = sum(simulate_ppk(RngStream(2, i), 3, 1.0, 1e-9).event_times.size == 0 for i in range(500))
    assert empty == 500


def test_ppk_mean_and_covariance():
    e = ensemble(RngStream(3), ProcessSpec("PPk", 3, lam=1.0), 20_000, [0.0, 1.0, 2.0])
    assert mean_within(e.column(2), 12.0)[0]
    assert cov_within(e.column(1), e.column(2), 14.0)[0]
    assert var_within(e.column(2), 28.0)[0]


def test_nppk_constant_rate_matches_ppk():
    a = ensemble(4, ProcessSpec("NPPk", 2, rate=Constant(1.5)), 10_000, [3.0]).column(0)
    b = ensemble(5, ProcessSpec("PPk", 2, lam=1.5), 10_000, [3.0]).column(0)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_nppk_weibull_pmf_and_independent_increments():
    e = ensemble(6, ProcessSpec("NPPk", 2, rate=Weibull(1.0, 2.0)), 20_000, [0.0, 1.0, 2.0])
    assert chi2_pvalue(e.column(1), pmf_nppk_increment(2, 1.0, 40).probs) > 0.01
    inc1, inc2 = e.column(1), e.column(2) - e.column(1)
    assert chi2_pvalue(inc2, pmf_nppk_increment(2, 3.0, 60).probs) > 0.01
    assert cov_within(inc1, inc2, 0.0)[0]


def test_nppk_flat_table_uses_thinning():
    rate = Table([0.0, 1.0, 2.0], [2.0, 0.0, 1.0])
    e = ensemble(7, ProcessSpec("NPPk", 1, rate=rate), 10_000, [1.0, 2.0, 3.0])
    assert np.all(e.column(1) == e.column(0))  # nothing happens while the rate is zero
    assert chi2_pvalue(e.column(2), pmf_nppk_increment(1, cum_mass(rate, 0, 3), 30).probs) > 0.01


def test_nppk_public_path_has_events_on_horizon():
    p = simulate_nppk(RngStream(8), 3, Makeham(b=1, c=1, mu=0.5), 2.0)
    assert p.event_times.size > 0 and p.event_times[-1] <= 2.0


# ---------------------------------------------------------------- PAk / NPAk


def test_pak_rho_zero_is_poisson():
    x = ensemble(9, ProcessSpec("PAk", 3, lam=2.0, rho=0.0), 10_000, [1.5]).column(0)
    assert chi2_pvalue(x, stats.poisson.pmf(np.arange(30), 3.0)) > 0.01


def test_pak_moments():
    x = ensemble(10, ProcessSpec("PAk", 3, lam=2.0, rho=0.4), 20_000, [1.0]).column(0)
    mean, var = pak_moments(3, 0.4, 2.0)
    assert mean_within(x, mean)[0]
    assert var_within(x, var)[0]


def test_npak_increment_pmf_and_zero_mass():
    rate = Makeham(b=1.0, c=1.0, mu=0.0)
    e = ensemble(11, ProcessSpec("NPAk", 3, rate=rate, rho=0.4), 10_000, [0.5, 1.5])
    inc = e.column(1) - e.column(0)
    mass = cum_mass(rate, 0.5, 1.5)
    assert chi2_pvalue(inc, pmf_polya_aeppli_increment(3, 0.4, mass, 60).probs) > 0.01
    flat = Table([0.0, 1.0, 2.0], [1.0, 0.0, 1.0])
    z = ensemble(12, ProcessSpec("NPAk", 2, rate=flat, rho=0.3), 2000, [1.0, 2.0])
    assert np.all(z.column(1) == z.column(0))


def test_npak_constant_matches_pak():
    a = ensemble(13, ProcessSpec("NPAk", 3, rate=Constant(2.0), rho=0.5), 10_000, [1.0]).column(0)
    b = ensemble(14, ProcessSpec("PAk", 3, lam=2.0, rho=0.5), 10_000, [1.0]).column(0)
    assert stats.ks_2samp(a, b).pvalue > 0.01
    assert simulate_npak(RngStream(1), 2, 0.5, Constant(1.0), 1.0).horizon == 1.0


# ---------------------------------------------------------------- fractional


def test_fppk_alpha_one_methods_reduce_to_ppk():
    ref = ensemble(15, ProcessSpec("PPk", 2, lam=1.0), 10_000, [2.0]).column(0)
    for method, seed in (("timechange", 16), ("renewal", 17)):
        x = ensemble(seed, ProcessSpec("FPPk", 2, lam=1.0, alpha=1.0), 10_000, [2.0], method=method).column(0)
        assert stats.ks_2samp(x, ref).pvalue > 0.01


def test_fppk_methods_agree_and_match_pmf():
    spec = ProcessSpec("FPPk", 2, lam=1.0, alpha=0.8)
    tc = ensemble(18, spec, 10_000, [1.0], method="timechange").column(0)
    rn = ensemble(19, spec, 10_000, [1.0], method="renewal").column(0)
    assert stats.ks_2samp(tc, rn).pvalue > 0.01
    pmf = pmf_fppk(2, 1.0, 0.8, 1.0, 60).probs
    assert chi2_pvalue(tc, pmf) > 0.01
    assert chi2_pvalue(rn, pmf) > 0.01


def test_lambda_scale_is_a_different_process():
    spec = ProcessSpec("FPPk", 3, lam=1.0, alpha=0.95)
    std = ensemble(20, spec, 5000, [10.0], method="renewal").column(0)
    app = ensemble(20, spec, 5000, [10.0], method="renewal", ml_scale="lambda").column(0)
    assert stats.ks_2samp(std, app).pvalue < 1e-6
    with pytest.raises(DomainError):
        simulate_fppk(RngStream(1), 3, 1.0, 0.9, [1.0], method="renewal", ml_scale="bogus")


def test_fppk_renewal_path_events():
    p = simulate_fppk_renewal_path(RngStream(21), 2, 1.0, 0.7, 5.0)
    assert np.all(np.diff(p.event_times) > 0) and p.event_times[-1] <= 5.0


def test_fractional_grid_zero_gives_zero_counts():
    for cg in (
        simulate_fnppk(RngStream(1), 2, Weibull(1, 2), 0.7, [0.0]),
        simulate_nfpak(RngStream(1), 2, 0.4, Weibull(1, 2), 0.7, [0.0]),
        simulate_fppk(RngStream(1), 2, 1.0, 0.7, [0.0]),
    ):
        np.testing.assert_array_equal(cg.counts, [0])


def test_fnppk_constant_rate_matches_fppk():
    a = ensemble(22, ProcessSpec("FNPPk", 2, rate=Constant(1.0), alpha=0.7), 10_000, [1.0]).column(0)
    b = ensemble(23, ProcessSpec("FPPk", 2, lam=1.0, alpha=0.7), 10_000, [1.0]).column(0)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_fnppk_weibull_mean():
    # E N = k(k+1)/2 * E[Lambda(Y)] with Lambda(u) = u^2
    x = ensemble(24, ProcessSpec("FNPPk", 1, rate=Weibull(1.0, 2.0), alpha=0.7), 20_000, [1.0]).column(0)
    assert mean_within(x, ey(0.7, 1.0, 2.0))[0]


def test_fnppk_offset_shifts_operational_time():
    # with v the increment law is that of N^n(v + Y) - N^n(v): compare mean (k(k+1)/2) E[(v+Y)^2 - v^2]
    v, alpha = 0.5, 0.7
    x = np.array([simulate_fnppk(RngStream(25, i), 1, Weibull(1, 2), alpha, [1.0], v=v).counts[0] for i in range(10_000)])
    assert mean_within(x, ey(alpha, 1.0, 2.0) + 2 * v * ey(alpha, 1.0))[0]


def test_fpak_moments():
    k, rho, lam, alpha, t = 2, 0.3, 1.0, 0.8, 1.0
    x = ensemble(26, ProcessSpec("FPAk", k, lam=lam, rho=rho, alpha=alpha), 20_000, [t]).column(0)
    m1, v1 = pak_moments(k, rho, lam)
    var_y = ey(alpha, t, 2.0) - ey(alpha, t) ** 2
    assert mean_within(x, m1 * ey(alpha, t))[0]
    assert var_within(x, v1 * ey(alpha, t) + m1**2 * var_y)[0]


def test_fpak_alpha_one_is_pak_and_renewal_agrees():
    a = ensemble(27, ProcessSpec("FPAk", 3, lam=2.0, rho=0.4, alpha=1.0), 10_000, [1.0]).column(0)
    b = ensemble(28, ProcessSpec("PAk", 3, lam=2.0, rho=0.4), 10_000, [1.0]).column(0)
    assert stats.ks_2samp(a, b).pvalue > 0.01
    c = [simulate_fpak(RngStream(29, i), 3, 0.4, 2.0, 0.6, [1.0], method="renewal").counts[0] for i in range(5000)]
    d = [simulate_fpak(RngStream(30, i), 3, 0.4, 2.0, 0.6, [1.0]).counts[0] for i in range(5000)]
    assert stats.ks_2samp(c, d).pvalue > 0.01


def test_nfpak_constant_rate_matches_fpak():
    a = ensemble(31, ProcessSpec("NFPAk", 2, rate=Constant(1.5), rho=0.3, alpha=0.8), 10_000, [1.0]).column(0)
    b = ensemble(32, ProcessSpec("FPAk", 2, lam=1.5, rho=0.3, alpha=0.8), 10_000, [1.0]).column(0)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_nfpak_weibull_pmf_against_quadrature():
    k, rho, alpha, t = 2, 0.4, 0.7, 0.5
    rate = Weibull(1.0, 2.0)
    x = ensemble(33, ProcessSpec("NFPAk", k, rate=rate, rho=rho, alpha=alpha), 20_000, [t]).column(0)
    pmf = pmf_subordinated(trunc_geom_severity(rho, k), lambda u: cum_mass(rate, np.zeros_like(u), u), alpha, t, 6)
    pmf = np.append(pmf, 1 - pmf.sum())
    assert chi2_pvalue(np.minimum(x, 7), pmf) > 0.01


def test_fractional_increments_positively_correlated():
    e = ensemble(34, ProcessSpec("FPPk", 1, lam=2.0, alpha=0.6), 20_000, [0.0, 1.0, 2.0])
    inc1, inc2 = e.column(1), e.column(2) - e.column(1)
    ok, cov, se = cov_within(inc1, inc2, 0.0)
    assert cov > 4 * se


# ---------------------------------------------------------------- ensembles


def test_ensemble_single_row_matches_simulator():
    spec = ProcessSpec("FPAk", 2, lam=1.0, rho=0.3, alpha=0.7)
    grid = [0.0, 0.5, 1.0]
    e = ensemble(RngStream(99, 5), spec, 1, grid)
    np.testing.assert_array_equal(e.counts_matrix[0], simulate(RngStream(99, 0), spec, grid).counts)


def test_ensemble_reproducible_and_thread_independent(monkeypatch):
    spec = ProcessSpec("FNPPk", 2, rate=Weibull(1, 2), alpha=0.6)
    grid = np.linspace(0, 2, 5)
    a = ensemble(7, spec, 300, grid, threads=1).counts_matrix
    b = ensemble(7, spec, 300, grid, threads=4).counts_matrix
    np.testing.assert_array_equal(a, b)
    monkeypatch.setenv("FCOUNT_THREADS", "3")
    assert worker_count() == 3
    np.testing.assert_array_equal(a, ensemble(7, spec, 300, grid).counts_matrix)
    monkeypatch.setenv("FCOUNT_THREADS", "zero")
    with pytest.raises(DomainError):
        worker_count()


def test_ensemble_rejects_bad_options():
    with pytest.raises(DomainError):
        ensemble(1, ProcessSpec("PPk", 1, lam=1.0), 2, [1.0], method="renewal")
    with pytest.raises(DomainError):
        ensemble(1, ProcessSpec("FNPPk", 1, rate=Constant(1.0), alpha=0.5), 2, [1.0], method="renewal")
    with pytest.raises(DomainError):
        ensemble(1, ProcessSpec("PPk", 1, lam=1.0), 0, [1.0])
    with pytest.raises(DomainError):
        ensemble(1, ProcessSpec("PPk", 1, lam=1.0), 2, [1.0, 0.5])
