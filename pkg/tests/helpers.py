"""Statistical oracles shared by the simulation tests."""

import math

import numpy as np
from scipy import stats


def mean_within(samples, expected, n_se=4.0):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    return abs(samples.mean() - expected) <= n_se * se, samples.mean(), se


def var_within(samples, expected, n_se=4.0):
    x = np.asarray(samples, dtype=float)
    c = x - x.mean()
    se = math.sqrt(max(np.mean(c**4) - np.mean(c**2) ** 2, 0.0) / x.size)
    return abs(x.var(ddof=1) - expected) <= n_se * se, x.var(ddof=1), se


def cov_within(x, y, expected, n_se=4.0):
    """Sample covariance against ``expected`` with the SE of the mean of centered products."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod = (x - x.mean()) * (y - y.mean())
    se = prod.std(ddof=1) / math.sqrt(x.size)
    cov = prod.sum() / (x.size - 1)
    return abs(cov - expected) <= n_se * se, cov, se


def chi2_pvalue(samples, pmf, min_expected=5.0):
    """Chi-square goodness of fit of integer samples to ``pmf`` (tail lumped into the last bin)."""
    samples = np.asarray(samples, dtype=np.int64)
    n = samples.size
    pmf = np.asarray(pmf, dtype=float)
    # merge the right tail until every bin expects enough counts
    m_hi = pmf.size - 1
    while m_hi > 0 and n * (1 - pmf[:m_hi].sum()) < min_expected:
        m_hi -= 1
    probs = np.append(pmf[:m_hi], max(1 - pmf[:m_hi].sum(), 0.0))
    obs = np.bincount(np.minimum(samples, m_hi), minlength=m_hi + 1)
    keep = n * probs >= min_expected
    # lump sparse interior bins together as well
    exp_counts = np.append(n * probs[keep], n * probs[~keep].sum())
    obs_counts = np.append(obs[keep], obs[~keep].sum())
    if exp_counts[-1] < min_expected:
        exp_counts[-2] += exp_counts[-1]
        obs_counts[-2] += obs_counts[-1]
        exp_counts, obs_counts = exp_counts[:-1], obs_counts[:-1]
    exp_counts *= obs_counts.sum() / exp_counts.sum()
    return stats.chisquare(obs_counts, exp_counts).pvalue
