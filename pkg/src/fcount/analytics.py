"""Analytic moments, covariances and long-range-dependence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError, ShapeError
from .processes import Ensemble, ProcessSpec
from .rates import Constant, RateFunction
from .sampling import RngStream, default_path_step, sample_inverse_subordinator_paths
from .specfun import GridFunction, subordinator_rule

__all__ = [
    "MomentReport",
    "LrdReport",
    "inv_sub_moment",
    "inv_sub_var",
    "inv_sub_cov",
    "severity_moments",
    "moments_ppk",
    "moments_nppk",
    "moments_fppk",
    "moments_fnppk",
    "moments_pak",
    "moments_npak",
    "moments_fpak",
    "moments_nfpak",
    "moments",
    "lrd_constant",
    "correlation_curve",
    "empirical_moments",
    "lrd_fit",
]

COV_TOL = 1e-10
DEFAULT_MC_PATHS = 100_000


@dataclass(frozen=True)
class MomentReport:
    """Moments of N(t), optionally with Cov[N(t), N(s)] and Var[N(s)].

    ``standard_errors`` is filled in empirical or Monte Carlo mode and maps field
    names to their standard errors. ``method`` names how the covariance was obtained.
    """

    mean: float
    variance: float
    covariance: float | None = None
    variance_s: float | None = None
    standard_errors: dict | None = None
    method: str = "closed form"

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError(f"negative variance {self.variance}")
        if self.variance_s is not None and self.variance_s < 0:
            raise DomainError(f"negative variance {self.variance_s}")
        if self.standard_errors and any(v < 0 for v in self.standard_errors.values()):
            raise DomainError("standard errors must be nonnegative")

    @property
    def correlation(self) -> float | None:
        """Corr[N(t), N(s)] when the covariance and both variances are known."""
        if self.covariance is None or self.variance_s is None:
            return None
        denom = math.sqrt(self.variance * self.variance_s)
        return self.covariance / denom if denom > 0 else math.nan

    def as_dict(self) -> dict:
        out = {"mean": self.mean, "variance": self.variance}
        if self.covariance is not None:
            out["covariance"] = self.covariance
            out["variance_s"] = self.variance_s
            out["correlation"] = self.correlation
        if self.standard_errors:
            out["standard_errors"] = dict(self.standard_errors)
        out["method"] = self.method
        return out


@dataclass(frozen=True)
class LrdReport:
    fitted_exponent: float
    theoretical_constant: float | None
    fit_range: tuple[float, float]
    residual: float
    fitted_constant: float = math.nan
    n_points: int = 0

    def __post_init__(self):
        lo, hi = self.fit_range
        if not 0 < lo < hi:
            raise DomainError(f"fit range must be a nonempty positive interval, got {self.fit_range}")
        if self.residual < 0:
            raise DomainError("residual must be nonnegative")


# ---------------------------------------------------------------------------
# Inverse stable subordinator


def _check_alpha(alpha):
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")


def _check_time(t, name="t"):
    if not (t >= 0 and math.isfinite(t)):
        raise DomainError(f"{name} must be finite and nonnegative, got {t}")


def inv_sub_moment(alpha: float, nu: float, t: float) -> float:
    """E[Y_alpha(t)^nu] = Gamma(nu+1) / Gamma(alpha nu + 1) t^(alpha nu)."""
    _check_alpha(alpha)
    _check_time(t)
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    if t == 0:
        return 0.0
    return math.exp(math.lgamma(nu + 1) - math.lgamma(alpha * nu + 1) + alpha * nu * math.log(t))


def inv_sub_var(alpha: float, t: float) -> float:
    _check_alpha(alpha)
    _check_time(t)
    d = 2 / math.gamma(2 * alpha + 1) - 1 / math.gamma(alpha + 1) ** 2
    return max(d, 0.0) * t ** (2 * alpha)


def inv_sub_cov(alpha: float, t: float, s: float) -> float:
    """Cov[Y_alpha(t), Y_alpha(s)].

    The integral is taken over ``w = tau^alpha``, which removes the ``tau^(alpha-1)``
    singularity. The powers of t and s are subtracted inside the integrand so that the
    leading ``(st)^alpha`` terms cancel analytically instead of numerically:

        Cov = m^(2 alpha) / Gamma(1+alpha)^2
              + int_0^m [(t-tau)^a - t^a + (s-tau)^a - s^a] tau^(a-1) dtau / (Gamma(1+a) Gamma(a))

    with ``m = min(s, t)``.
    """
    _check_alpha(alpha)
    _check_time(t)
    _check_time(s, "s")
    s, t = sorted((s, t))
    m = s
    if m == 0 or alpha == 1:
        return 0.0
    a = alpha

    def integrand(w):
        tau = w ** (1.0 / a)
        return ((t - tau) ** a - t**a + (s - tau) ** a - s**a) / a

    scale = max(t, s) ** a * m**a
    val, err, info = integrate.quad(integrand, 0.0, m**a, epsabs=COV_TOL * scale, epsrel=COV_TOL, limit=200, full_output=1)[:3]
    if err > 1e3 * COV_TOL * max(scale, abs(val)):
        raise QuadratureError(f"inv_sub_cov(alpha={alpha}, t={t}, s={s}) did not converge: estimate {val}, error {err}")
    return m ** (2 * a) / math.gamma(1 + a) ** 2 + val / (math.gamma(1 + a) * math.gamma(a))


# ---------------------------------------------------------------------------
# Compound structure: N = X_1 + ... + X_C with C ~ Poisson(G) given the random mass G


def severity_moments(k: int, rho: float | None = None) -> tuple[float, float]:
    """(E X, E X^2) for the uniform law on 1..k, or the truncated geometric one when ``rho`` is given."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if rho is None:
        return (k + 1) / 2, (k + 1) * (2 * k + 1) / 6
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    j = np.arange(k)
    powers = rho**j if rho > 0 else (j == 0).astype(float)
    norm = 1 - rho**k
    m1 = (powers.sum() - k * rho**k) / norm
    m2 = ((2 * j + 1) @ powers - k**2 * rho**k) / norm
    return float(m1), float(m2)


def _compound(m1, m2, g_t, var_t, g_s=None, var_s=None, g_min=None, cov_g=None, **extra):
    """Moments of N from those of the directing mass G (Wald and compound-variance identities)."""
    mean = m1 * g_t
    var = m2 * g_t + m1**2 * var_t
    if g_s is None:
        return MomentReport(mean, max(var, 0.0), **extra)
    var_s_ = m2 * g_s + m1**2 * var_s
    cov = m2 * g_min + m1**2 * cov_g
    return MomentReport(mean, max(var, 0.0), cov, max(var_s_, 0.0), **extra)


def _check_lam(lam):
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError(f"lam must be finite and nonnegative, got {lam}")


def _deterministic_mass(m1, m2, big_t, big_s=None):
    if big_s is None:
        return _compound(m1, m2, big_t, 0.0)
    return _compound(m1, m2, big_t, 0.0, big_s, 0.0, min(big_t, big_s), 0.0)


def _subordinated_mass(m1, m2, mu, alpha, t, s):
    """Constant-rate mass G(t) = mu Y_alpha(t)."""
    g_t = mu * inv_sub_moment(alpha, 1, t) if t > 0 else 0.0
    var_t = mu**2 * inv_sub_var(alpha, t)
    if s is None:
        return _compound(m1, m2, g_t, var_t)
    g_s = mu * inv_sub_moment(alpha, 1, s) if s > 0 else 0.0
    var_s = mu**2 * inv_sub_var(alpha, s)
    return _compound(m1, m2, g_t, var_t, g_s, var_s, min(g_t, g_s), mu**2 * inv_sub_cov(alpha, t, s))


def moments_ppk(k: int, lam: float, t: float, s: float | None = None) -> MomentReport:
    """E N(t) = k(k+1)/2 lam t and Cov[N(t), N(s)] = k(k+1)(2k+1)/6 lam min(s, t)."""
    _check_lam(lam)
    _check_time(t)
    if s is not None:
        _check_time(s, "s")
    m1, m2 = severity_moments(k)
    return _deterministic_mass(m1, m2, k * lam * t, None if s is None else k * lam * s)


def moments_pak(k: int, rho: float, lam: float, t: float, s: float | None = None) -> MomentReport:
    _check_lam(lam)
    _check_time(t)
    if s is not None:
        _check_time(s, "s")
    m1, m2 = severity_moments(k, rho)
    return _deterministic_mass(m1, m2, lam * t, None if s is None else lam * s)


def moments_nppk(k: int, rate: RateFunction, t: float, s: float | None = None) -> MomentReport:
    _check_time(t)
    m1, m2 = severity_moments(k)
    big_s = None if s is None else k * float(rate._cum(np.asarray([s], dtype=float))[0])
    return _deterministic_mass(m1, m2, k * float(rate._cum(np.asarray([t], dtype=float))[0]), big_s)


def moments_npak(k: int, rho: float, rate: RateFunction, t: float, s: float | None = None) -> MomentReport:
    _check_time(t)
    m1, m2 = severity_moments(k, rho)
    big_s = None if s is None else float(rate._cum(np.asarray([s], dtype=float))[0])
    return _deterministic_mass(m1, m2, float(rate._cum(np.asarray([t], dtype=float))[0]), big_s)


def moments_fppk(k: int, lam: float, alpha: float, t: float, s: float | None = None) -> MomentReport:
    _check_lam(lam)
    _check_alpha(alpha)
    _check_time(t)
    if s is not None:
        _check_time(s, "s")
    m1, m2 = severity_moments(k)
    return _subordinated_mass(m1, m2, k * lam, alpha, t, s)


def moments_fpak(k: int, rho: float, lam: float, alpha: float, t: float, s: float | None = None) -> MomentReport:
    """FPAk moments with E N(t) = E[N_PAk(1)] t^alpha / Gamma(1 + alpha)."""
    _check_lam(lam)
    _check_alpha(alpha)
    _check_time(t)
    if s is not None:
        _check_time(s, "s")
    m1, m2 = severity_moments(k, rho)
    return _subordinated_mass(m1, m2, lam, alpha, t, s)


def _mass_moments(rate: RateFunction, alpha: float, t: float):
    """(E Lambda(Y_t), Var Lambda(Y_t)) by quadrature over the subordinator law."""
    if t == 0:
        return 0.0, 0.0
    if alpha == 1:
        return float(rate._cum(np.asarray([t], dtype=float))[0]), 0.0
    rule = subordinator_rule(alpha)
    first, second = rule.expect(lambda u: np.stack([rate._cum(u), rate._cum(u) ** 2]), t)
    return float(first), max(float(second - first**2), 0.0)


def _nonhomogeneous_fractional(
    m1, m2, mult, rate, alpha, t, s, n_mc, seed, step
) -> MomentReport:
    _check_alpha(alpha)
    _check_time(t)
    if not isinstance(rate, RateFunction):
        raise DomainError("rate must be a RateFunction")
    if isinstance(rate, Constant):
        return _subordinated_mass(m1, m2, mult * rate.lam, alpha, t, s)
    g_t, var_t = _mass_moments(rate, alpha, t)
    g_t, var_t = mult * g_t, mult**2 * var_t
    if s is None:
        return _compound(m1, m2, g_t, var_t)
    _check_time(s, "s")
    g_s, var_s = _mass_moments(rate, alpha, s)
    g_s, var_s = mult * g_s, mult**2 * var_s
    g_min = min(g_t, g_s)
    if alpha == 1 or min(s, t) == 0:
        return _compound(m1, m2, g_t, var_t, g_s, var_s, g_min, 0.0)
    if s == t:
        return _compound(m1, m2, g_t, var_t, g_s, var_s, g_min, var_t)
    # no closed form for the joint law of (Y(s), Y(t)): Monte Carlo on joint paths
    lo, hi = sorted((s, t))
    step = default_path_step(alpha, hi) * 10 if step is None else step
    y = sample_inverse_subordinator_paths(RngStream(seed, 0), alpha, np.array([lo, hi]), n_mc, step=step)
    lam_y = mult * rate._cum(y.ravel()).reshape(y.shape)
    c = lam_y - lam_y.mean(axis=0)
    prod = c[:, 0] * c[:, 1]
    cov_g = float(prod.sum() / (n_mc - 1))
    se_g = float(prod.std(ddof=1) / math.sqrt(n_mc))
    rep = _compound(m1, m2, g_t, var_t, g_s, var_s, g_min, cov_g, method=f"monte carlo ({n_mc} joint paths)")
    return MomentReport(
        rep.mean, rep.variance, rep.covariance, rep.variance_s, {"covariance": m1**2 * se_g}, rep.method
    )


def moments_fnppk(
    k: int,
    rate: RateFunction,
    alpha: float,
    t: float,
    s: float | None = None,
    *,
    n_mc: int = DEFAULT_MC_PATHS,
    seed: int = 0,
    step: float | None = None,
) -> MomentReport:
    """FNPPk moments with directing mass k Lambda(Y_alpha(t)).

    Means and variances use quadrature over the law of Y_alpha(t). Cov[Lambda(Y(t)), Lambda(Y(s))]
    has no closed form for a general rate and is estimated from ``n_mc`` joint subordinator
    paths (its standard error is reported); constant rates use the exact formula.
    """
    m1, m2 = severity_moments(k)
    return _nonhomogeneous_fractional(m1, m2, k, rate, alpha, t, s, n_mc, seed, step)


def moments_nfpak(
    k: int,
    rho: float,
    rate: RateFunction,
    alpha: float,
    t: float,
    s: float | None = None,
    *,
    n_mc: int = DEFAULT_MC_PATHS,
    seed: int = 0,
    step: float | None = None,
) -> MomentReport:
    """NFPAk moments with directing mass Lambda(Y_alpha(t)); see :func:`moments_fnppk`."""
    m1, m2 = severity_moments(k, rho)
    return _nonhomogeneous_fractional(m1, m2, 1, rate, alpha, t, s, n_mc, seed, step)


def moments(spec: ProcessSpec, t: float, s: float | None = None, **mc) -> MomentReport:
    """Dispatch on ``spec.family``; ``mc`` options reach the Monte Carlo covariance estimators."""
    fam = spec.family
    if fam == "PPk":
        return moments_ppk(spec.k, spec.lam, t, s)
    if fam == "PAk":
        return moments_pak(spec.k, spec.rho, spec.lam, t, s)
    if fam == "NPPk":
        return moments_nppk(spec.k, spec.rate, t, s)
    if fam == "NPAk":
        return moments_npak(spec.k, spec.rho, spec.rate, t, s)
    if fam == "FPPk":
        return moments_fppk(spec.k, spec.lam, spec.alpha, t, s)
    if fam == "FPAk":
        return moments_fpak(spec.k, spec.rho, spec.lam, spec.alpha, t, s)
    if fam == "FNPPk":
        return moments_fnppk(spec.k, spec.rate, spec.alpha, t, s, **mc)
    return moments_nfpak(spec.k, spec.rho, spec.rate, spec.alpha, t, s, **mc)


# ---------------------------------------------------------------------------
# Long-range dependence


def _order_one(family: str, params: dict) -> tuple[float, float]:
    """(E N(1), Var N(1)) of the classical process behind a fractional family."""
    fam = family.lower()
    try:
        if fam == "fppk":
            m1, m2 = severity_moments(int(params["k"]))
            mu = int(params["k"]) * float(params["lam"])
        elif fam == "fpak":
            m1, m2 = severity_moments(int(params["k"]), float(params["rho"]))
            mu = float(params["lam"])
        else:
            raise DomainError(f"LRD constants are defined for FPPk and FPAk, not {family!r}")
    except KeyError as exc:
        raise DomainError(f"missing parameter {exc} for {family}") from None
    if not mu > 0:
        raise DomainError("lam must be positive")
    return mu * m1, mu * m2


def lrd_constant(family: str, params: dict, alpha: float, s: float, form: str = "limit") -> float:
    """c(s) = lim_{t -> inf} Corr[N(s), N(t)] t^alpha for FPPk or FPAk.

    With ``B = E N(1)``, ``A = Var N(1)`` of the classical process and
    ``d = 2/Gamma(1+2a) - 1/Gamma(1+a)^2`` the limit is

        [A s^a / Gamma(1+a) + B^2 s^(2a) / Gamma(1+2a)] / (B sqrt(d) sqrt(Var N(s))).

    ``form="legacy"`` returns the older closed form
    ``[a A / (Gamma(1+a) B^2) + a s^a / Gamma(1+2a)] / (1/Gamma(2a) - 1/(a Gamma(a)^2))``,
    which lacks the ``sqrt(d Var N(s)) / (B s^a)`` normalization and is not the limit.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1) for long-range dependence, got {alpha}")
    if not s > 0:
        raise DomainError("s must be positive")
    b, a_var = _order_one(family, params)
    a = alpha
    g1, g2 = math.gamma(1 + a), math.gamma(1 + 2 * a)
    if form == "legacy":
        pre = 1 / math.gamma(2 * a) - 1 / (a * math.gamma(a) ** 2)
        return (a * a_var / (g1 * b**2) + a * s**a / g2) / pre
    if form != "limit":
        raise DomainError(f"unknown form {form!r}")
    d = 2 / g2 - 1 / g1**2
    var_s = a_var * s**a / g1 + b**2 * d * s ** (2 * a)
    return (a_var * s**a / g1 + b**2 * s ** (2 * a) / g2) / (b * math.sqrt(d) * math.sqrt(var_s))


def correlation_curve(family: str, params: dict, alpha: float, s: float, times) -> GridFunction:
    """Exact Corr[N(s), N(t)] on ``times`` from the analytic moments."""
    times = np.asarray(times, dtype=float)
    fam = family.lower()
    _order_one(family, params)
    out = np.empty(times.size)
    for i, t in enumerate(times):
        if fam == "fppk":
            rep = moments_fppk(int(params["k"]), float(params["lam"]), alpha, float(t), s)
        else:
            rep = moments_fpak(int(params["k"]), float(params["rho"]), float(params["lam"]), alpha, float(t), s)
        out[i] = rep.correlation
    return GridFunction(times, out)


def lrd_fit(
    corr_curve: GridFunction, fit_range=(1e2, 1e4), theoretical_constant: float | None = None
) -> LrdReport:
    """Least-squares fit of log Corr against log t over ``fit_range``.

    ``residual`` is the root-mean-square deviation of the log-log fit.
    """
    lo, hi = map(float, fit_range)
    if not 0 < lo < hi:
        raise DomainError(f"fit range must be a nonempty positive interval, got {fit_range}")
    sel = (corr_curve.grid >= lo) & (corr_curve.grid <= hi)
    t, c = corr_curve.grid[sel], corr_curve.values[sel]
    if t.size < 2:
        raise ShapeError("need at least two curve points inside the fit range")
    if np.any(c <= 0):
        raise DomainError("correlations must be positive inside the fit range")
    x, y = np.log(t), np.log(c)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return LrdReport(float(slope), theoretical_constant, (lo, hi), resid, float(math.exp(intercept)), int(t.size))


# ---------------------------------------------------------------------------
# Empirical estimators


def empirical_moments(e: Ensemble, t_index: int, s_index: int | None = None) -> MomentReport:
    """Unbiased sample moments of an ensemble column with standard errors.

    The variance SE uses the fourth central moment, the covariance SE that of the
    centered products.
    """
    x = e.column(t_index).astype(float)
    n = x.size
    if n < 2:
        raise DomainError("need at least two paths")
    cx = x - x.mean()
    var = float(cx @ cx / (n - 1))
    ses = {
        "mean": math.sqrt(var / n),
        "variance": math.sqrt(max(np.mean(cx**4) - np.mean(cx**2) ** 2, 0.0) / n),
    }
    if s_index is None:
        return MomentReport(float(x.mean()), var, standard_errors=ses, method="empirical")
    y = e.column(s_index).astype(float)
    cy = y - y.mean()
    prod = cx * cy
    ses["covariance"] = float(prod.std(ddof=1) / math.sqrt(n))
    return MomentReport(
        float(x.mean()), var, float(prod.sum() / (n - 1)), float(cy @ cy / (n - 1)), ses, "empirical"
    )
