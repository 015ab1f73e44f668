"""Exact marginal pmfs of the order-k counting laws and their fractional mixtures."""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError
from .specfun import prabhakar_ml, subordinator_rule

__all__ = [
    "PmfVector",
    "uniform_severity",
    "trunc_geom_severity",
    "compound_poisson_pmf",
    "omega_index",
    "pmf_poisson_order_k",
    "pmf_poisson_order_k_omega",
    "pmf_polya_aeppli_order_k",
    "polya_aeppli_closed_form",
    "compositions",
    "pmf_fppk",
    "pmf_fppk_quadrature",
    "pmf_subordinated",
    "pmf_nppk_increment",
    "pmf_polya_aeppli_increment",
]

# largest composition weight accepted for the resummed series
_MAX_SERIES_WEIGHT = 1e3
FPPK_SERIES_LIMIT = 50.0


@dataclass(frozen=True)
class PmfVector:
    """Probabilities ``probs[m] = P[N = m]`` for ``m = 0..m_max``."""

    probs: np.ndarray
    tail_mass_bound: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("probs must be a nonempty 1-d array")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise DomainError("probabilities must lie in [0, 1]")
        if p.sum() > 1 + 1e-12:
            raise DomainError(f"total mass {p.sum()} exceeds 1")
        if self.tail_mass_bound < 0:
            raise DomainError("tail bound must be nonnegative")
        object.__setattr__(self, "probs", np.clip(p, 0.0, 1.0))

    @property
    def m_max(self) -> int:
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size

    def __getitem__(self, m):
        return self.probs[m]

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def moment(self, order: int) -> float:
        return float(np.arange(self.probs.size, dtype=float) ** order @ self.probs)

    def pgf(self, u: float) -> float:
        return float(np.polynomial.polynomial.polyval(u, self.probs))


def _check_k(k):
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError(f"k must be a positive integer, got {k!r}")


def _check_m_max(m_max):
    if not (isinstance(m_max, (int, np.integer)) and m_max >= 0):
        raise DomainError(f"m_max must be a nonnegative integer, got {m_max!r}")


def _check_rho(rho):
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0,1), got {rho}")


def uniform_severity(k: int) -> np.ndarray:
    """Severity vector ``f[0..k]`` of the discrete uniform law on 1..k."""
    _check_k(k)
    f = np.full(k + 1, 1.0 / k)
    f[0] = 0.0
    return f


def trunc_geom_severity(rho: float, k: int) -> np.ndarray:
    """Severity vector ``f[0..k]`` with ``f[m] = (1-rho) rho^(m-1) / (1-rho^k)``."""
    _check_k(k)
    _check_rho(rho)
    f = np.zeros(k + 1)
    f[1:] = (1 - rho) * rho ** np.arange(k) / (1 - rho**k)
    return f


def compound_poisson_pmf(rate, severity: np.ndarray, m_max: int) -> np.ndarray:
    """Compound Poisson pmf by the Panjer-class recursion.

    ``p_m = (rate/m) sum_j j f_j p_{m-j}``. ``rate`` may be an array, in which case
    the result has shape ``(m_max+1, len(rate))``. Intermediate values are rescaled
    so that large rates do not underflow ``p_0``.
    """
    rate = np.asarray(rate, dtype=float)
    scalar = rate.ndim == 0
    lam = np.atleast_1d(rate)
    if np.any(lam < 0):
        raise DomainError("Poisson rate must be nonnegative")
    K = severity.size - 1
    jf = np.arange(K + 1) * severity
    r = np.zeros((m_max + 1, lam.size))
    r[0] = 1.0
    log_scale = np.zeros(lam.size)
    for m in range(1, m_max + 1):
        lo = max(0, m - K)
        # r[m-j] for j = 1..min(m,K), i.e. rows m-1 down to lo
        r[m] = lam / m * (jf[m - lo : 0 : -1] @ r[lo:m])
        big = r[m] > 1e250
        if np.any(big):
            s = r[m, big].copy()
            r[: m + 1, big] /= s
            log_scale[big] += np.log(s)
    # r was built with p_0 = 1; undo the rescalings and apply exp(-rate)
    p = r * np.exp(log_scale - lam)
    return p[:, 0] if scalar else p


def _poisson_tail_bound(count_rate: float, k: int, m_max: int) -> float:
    # N <= k * (number of epochs), so N > m_max needs more than floor(m_max/k) epochs
    bound = float(stats.poisson.sf(m_max // k, count_rate)) if count_rate > 0 else 0.0
    return min(1.0, bound + 64 * np.finfo(float).eps * (m_max + 1))


def pmf_poisson_order_k(k: int, big_lambda: float, m_max: int) -> PmfVector:
    """Poisson distribution of order k: epochs Poisson(k*Lambda), jumps uniform on 1..k."""
    _check_k(k)
    _check_m_max(m_max)
    if not big_lambda >= 0:
        raise DomainError("Lambda must be nonnegative")
    p = compound_poisson_pmf(k * big_lambda, uniform_severity(k), m_max)
    return PmfVector(p, _poisson_tail_bound(k * big_lambda, k, m_max))


def pmf_polya_aeppli_order_k(k: int, rho: float, big_lambda: float, m_max: int) -> PmfVector:
    """Polya-Aeppli distribution of order k: epochs Poisson(Lambda), truncated geometric jumps."""
    _check_k(k)
    _check_rho(rho)
    _check_m_max(m_max)
    if not big_lambda >= 0:
        raise DomainError("Lambda must be nonnegative")
    p = compound_poisson_pmf(big_lambda, trunc_geom_severity(rho, k), m_max)
    return PmfVector(p, _poisson_tail_bound(big_lambda, k, m_max))


def pmf_nppk_increment(k: int, mass: float, m_max: int) -> PmfVector:
    """Increment law of the non-homogeneous process over an interval carrying ``mass``."""
    return pmf_poisson_order_k(k, mass, m_max)


def pmf_polya_aeppli_increment(k: int, rho: float, mass: float, m_max: int) -> PmfVector:
    return pmf_polya_aeppli_order_k(k, rho, mass, m_max)


# ---------------------------------------------------------------------------
# small-m oracles


def omega_index(k: int, m: int) -> Iterator[tuple[int, ...]]:
    """All tuples ``(n_1..n_k)`` of nonnegative integers with ``n_1 + 2 n_2 + ... + k n_k = m``."""
    _check_k(k)

    def rec(j, remaining):
        if j == 1:
            yield (remaining,)
            return
        for nj in range(remaining // j + 1):
            for rest in rec(j - 1, remaining - j * nj):
                yield rest + (nj,)

    yield from rec(k, m)


def pmf_poisson_order_k_omega(k: int, big_lambda: float, m: int) -> float:
    """``e^{-k Lambda} sum_Omega Lambda^(n_1+..+n_k) / (n_1! ... n_k!)`` by explicit enumeration."""
    total = 0.0
    for n in omega_index(k, m):
        z = sum(n)
        total += math.exp(z * math.log(big_lambda) - sum(math.lgamma(x + 1) for x in n)) if z else 1.0
    return math.exp(-k * big_lambda) * total if big_lambda > 0 else float(m == 0)


def polya_aeppli_closed_form(k: int, rho: float, big_lambda: float, m: int) -> float:
    """``q_m = e^{-Lambda} sum_j C(m-1, j-1) Q^j / j! rho^(m-j)`` with ``Q = Lambda(1-rho)/(1-rho^k)``.

    Valid for ``m <= k`` only (no truncation correction is needed there).
    """
    if m > k:
        raise DomainError("closed form is only used for m <= k")
    if m == 0:
        return math.exp(-big_lambda)
    Q = big_lambda * (1 - rho) / (1 - rho**k)
    s = sum(math.comb(m - 1, j - 1) * Q**j / math.factorial(j) * rho ** (m - j) for j in range(1, m + 1))
    return math.exp(-big_lambda) * s


# ---------------------------------------------------------------------------
# fractional marginals


def compositions(k: int, m_max: int) -> np.ndarray:
    """``C[m, z]``: number of ways to write m as an ordered sum of z parts in 1..k."""
    C = np.zeros((m_max + 1, m_max + 1))
    C[0, 0] = 1.0
    with np.errstate(over="ignore"):  # counts beyond float range become inf
        for z in range(1, m_max + 1):
            for j in range(1, k + 1):
                C[j:, z] += C[: m_max + 1 - j, z - 1]
    return C


def pmf_subordinated(
    severity: np.ndarray, count_rate: Callable[[np.ndarray], np.ndarray], alpha: float, t: float, m_max: int
) -> np.ndarray:
    """``E[q_m(count_rate(Y_alpha(t)))]`` for a compound Poisson law with the given severity.

    ``count_rate`` maps operational time u to the Poisson parameter of the epoch count.
    Integration uses the fixed-node subordinator rule.
    """
    if alpha == 1:
        return compound_poisson_pmf(float(count_rate(np.asarray([t]))[0]), severity, m_max)
    rule = subordinator_rule(alpha)
    return rule.expect(lambda u: compound_poisson_pmf(count_rate(u), severity, m_max), t)


def pmf_fppk_quadrature(k: int, lam: float, alpha: float, t: float, m_max: int) -> PmfVector:
    """FPPk marginal as ``int p_m(u) h_alpha(t, u) du`` with the PPk pmf p_m."""
    p = pmf_subordinated(uniform_severity(k), lambda u: k * lam * u, alpha, t, m_max)
    return PmfVector(np.clip(p, 0, 1), _fppk_tail(k, lam, alpha, t, m_max))


def _fppk_tail(k, lam, alpha, t, m_max):
    if alpha == 1:
        return _poisson_tail_bound(k * lam * t, k, m_max)
    rule = subordinator_rule(alpha)
    sf = rule.expect(lambda u: stats.poisson.sf(m_max // k, k * lam * u), t)
    return min(1.0, float(sf) + rule.lower_tail + 64 * np.finfo(float).eps * (m_max + 1))


def pmf_fppk(k: int, lam: float, alpha: float, t: float, m_max: int) -> PmfVector:
    """Marginal pmf of the fractional Poisson process of order k.

    ``P[N(t) = m] = sum_z C(m, z) (lam t^alpha)^z E^{z+1}_{alpha, alpha z + 1}(-k lam t^alpha)``
    where ``C(m, z)`` counts compositions of m into z parts of size at most k. Entries whose
    composition weights would amplify the series error, or arguments beyond
    ``FPPK_SERIES_LIMIT``, are computed by quadrature over the subordinator density instead.
    """
    _check_k(k)
    _check_m_max(m_max)
    if not lam > 0:
        raise DomainError("lam must be positive")
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        p = np.zeros(m_max + 1)
        p[0] = 1.0
        return PmfVector(p, 0.0)
    if alpha == 1:
        return pmf_poisson_order_k(k, lam * t, m_max)
    x = lam * t**alpha
    C = compositions(k, m_max)
    with np.errstate(divide="ignore"):
        log_w = np.log(C) + np.arange(m_max + 1)[None, :] * math.log(x)
    series_ok = np.max(np.where(C > 0, log_w, -np.inf), axis=1) <= math.log(_MAX_SERIES_WEIGHT)
    if k * x > FPPK_SERIES_LIMIT:
        series_ok[:] = False
    series_ok[0] = True
    p = np.empty(m_max + 1)
    cache: dict[int, float] = {}
    for m in np.flatnonzero(series_ok):
        total = 0.0
        for z in range(-(-m // k), m + 1):
            if z not in cache:
                cache[z] = prabhakar_ml(alpha, alpha * z + 1, z + 1, -k * x)
            total += C[m, z] * x**z * cache[z]
        p[m] = total
    if not np.all(series_ok):
        quad = pmf_fppk_quadrature(k, lam, alpha, t, m_max).probs
        p[~series_ok] = quad[~series_ok]
    return PmfVector(np.clip(p, 0, 1), _fppk_tail(k, lam, alpha, t, m_max))
