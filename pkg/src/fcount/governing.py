"""Fractional master equations: an L1 time-stepper and residual checkers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .distributions import PmfVector, compound_poisson_pmf, trunc_geom_severity, uniform_severity
from .errors import DomainError, QuadratureError, RefinementError, ShapeError
from .rates import RateFunction
from .specfun import (
    GridFunction,
    SubordinatorRule,
    _starting_weights,
    caputo_l1,
    correction_powers,
    l1_weights,
    subordinator_rule,
)

__all__ = [
    "GeneratorSpec",
    "ResidualReport",
    "generator_matrix",
    "solve_fractional_master",
    "pmf_curves",
    "residual_homogeneous",
    "residual_nonhomogeneous",
]

log = logging.getLogger(__name__)

NEGATIVITY_TOL = 1e-8


@dataclass(frozen=True)
class GeneratorSpec:
    """Homogeneous fractional system ``D^alpha p = A p`` truncated at ``m_max``.

    ``A`` is lower triangular: the equation for ``p_m`` only involves ``p_0..p_m``.
    """

    family: str
    k: int
    lam: float
    alpha: float
    m_max: int
    rho: float | None = None

    def __post_init__(self):
        fam = {"fppk": "FPPk", "fpak": "FPAk"}.get(str(self.family).lower())
        if fam is None:
            raise DomainError(f"generator family must be FPPk or FPAk, got {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError("lam must be finite and nonnegative")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (isinstance(self.m_max, (int, np.integer)) and self.m_max >= 0):
            raise DomainError("m_max must be a nonnegative integer")
        if fam == "FPAk":
            if self.rho is None or not 0 <= self.rho < 1:
                raise DomainError("FPAk requires rho in [0, 1)")
        elif self.rho is not None:
            raise DomainError("FPPk takes no rho")

    @property
    def count_rate(self) -> float:
        return self.k * self.lam if self.family == "FPPk" else self.lam

    @property
    def severity(self) -> np.ndarray:
        return uniform_severity(self.k) if self.family == "FPPk" else trunc_geom_severity(self.rho, self.k)


def _jump_matrix(severity: np.ndarray, m_max: int) -> np.ndarray:
    """``-I + F`` with ``F[m, m-j] = f_j``."""
    n = m_max + 1
    out = -np.eye(n)
    for j in range(1, min(severity.size, n)):
        out += severity[j] * np.eye(n, k=-j)
    return out


def generator_matrix(g: GeneratorSpec) -> np.ndarray:
    return g.count_rate * _jump_matrix(g.severity, g.m_max)


@dataclass(frozen=True)
class ResidualReport:
    max_residual: float
    per_m: np.ndarray
    argmax: tuple[int, float]
    u_cutoff: float | None = None


def _uniform_grid_from_zero(grid) -> tuple[np.ndarray, float]:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ShapeError("grid needs at least two points")
    if grid[0] != 0:
        raise DomainError("grid must start at 0")
    h = GridFunction(grid, np.zeros_like(grid)).step
    return grid, h


def _component_powers(g: GeneratorSpec, n_corr: int | None) -> list[tuple]:
    """Correction exponents per component.

    ``p_m`` needs at least ``ceil(m / j_max)`` epochs, so its expansion in powers of
    ``t^alpha`` starts there; lower exponents are dropped for that component.
    """
    powers = correction_powers(g.alpha, n_corr) if g.alpha < 1 else np.empty(0)
    j_max = int(np.flatnonzero(g.severity)[-1])
    out = []
    for m in range(g.m_max + 1):
        lead = -(-m // j_max) * g.alpha
        out.append(tuple(p for p in powers.tolist() if p >= lead - 1e-12))
    return out


def solve_fractional_master(g: GeneratorSpec, grid, n_corr: int | None = None, substeps: int = 1) -> list[PmfVector]:
    """Implicit L1 time-stepping of ``D^alpha p = A p`` with ``p(0) = delta_0``.

    Starting-weight corrections (exponents ``j alpha < 2``) remove the low-order error
    caused by the ``t^(j alpha)`` terms of the exact solution; the corrected starting
    values are solved as one coupled block, the rest by forward substitution. With
    ``substeps > 1`` the scheme runs on a grid that many times finer and is read back
    on ``grid``. ``alpha = 1`` is stepped exactly with the matrix exponential.

    Raises :class:`RefinementError` if a probability falls below ``-1e-8``.
    """
    grid, _ = _uniform_grid_from_zero(grid)
    if not (isinstance(substeps, (int, np.integer)) and substeps >= 1):
        raise DomainError("substeps must be a positive integer")
    fine = np.linspace(0.0, grid[-1], (grid.size - 1) * substeps + 1)
    probs = _solve(g, fine, n_corr)[::substeps]
    out = []
    for row in probs:
        clipped = np.clip(row, 0.0, 1.0)
        out.append(PmfVector(clipped / max(1.0, clipped.sum()), max(0.0, 1.0 - float(clipped.sum()))))
    return out


def _solve(g: GeneratorSpec, grid, n_corr: int | None) -> np.ndarray:
    grid, h = _uniform_grid_from_zero(grid)
    n_steps = grid.size - 1
    n = g.m_max + 1
    A = generator_matrix(g)
    a = g.alpha
    U = np.zeros((n_steps + 1, n))
    U[0, 0] = 1.0
    if a == 1:
        step = linalg.expm(h * A)
        for i in range(1, n_steps + 1):
            U[i] = step @ U[i - 1]
        return _checked(U, grid, h)

    comp = _component_powers(g, n_corr)
    q = min(max(len(p) for p in comp), n_steps)
    b = l1_weights(a, n_steps)
    c = h**-a / math.gamma(2 - a)
    # omega[i-1, l-1, m]: weight of U_l[m] - U_0[m] at step i
    omega = np.zeros((n_steps, q, n))
    for powers in set(comp):
        if not powers or len(powers) > n_steps:
            continue
        w = _starting_weights(float(a), n_steps, powers) * h**-a
        cols = [m for m in range(n) if comp[m] == powers]
        omega[:, : len(powers), cols] = w[:, :, None]

    def l1_coeffs(step):
        # coefficient of U_l, l = 0..step, in the L1 sum at time step `step`
        w = np.zeros(step + 1)
        w[step] = c * b[0]
        if step > 1:
            w[1:step] = c * (b[step - 1 : 0 : -1] - b[step - 2 :: -1][: step - 1])
        w[0] -= c * b[step - 1]
        return w

    if q:
        # coupled start: unknowns U_1..U_q
        M = np.zeros((q * n, q * n))
        rhs = np.zeros(q * n)
        for i in range(1, q + 1):
            w = l1_coeffs(i)
            row = slice((i - 1) * n, i * n)
            for l in range(1, q + 1):
                coef = (w[l] if l <= i else 0.0) + omega[i - 1, l - 1]
                M[row, (l - 1) * n : l * n] += np.diag(coef)
            M[row, row] -= A
            rhs[row] = -(w[0] - omega[i - 1].sum(axis=0)) * U[0]
        U[1 : q + 1] = np.linalg.solve(M, rhs).reshape(q, n)

    lhs = c * b[0] * np.eye(n) - A
    dU = np.zeros((n_steps, n))
    dU[:q] = np.diff(U[: q + 1], axis=0)
    start = U[1 : q + 1] - U[0]
    for i in range(q + 1, n_steps + 1):
        # history sum_{j=1}^{i-1} b_j (U_{i-j} - U_{i-j-1})
        hist = b[1:i] @ dU[i - 2 :: -1] if i > 1 else 0.0
        rhs = c * b[0] * U[i - 1] - c * hist
        if q:
            rhs -= np.einsum("lm,lm->m", omega[i - 1], start)
        U[i] = linalg.solve_triangular(lhs, rhs, lower=True, check_finite=False)
        dU[i - 1] = U[i] - U[i - 1]
    return _checked(U, grid, h)


def _checked(U, grid, h):
    worst = U.min()
    if worst < -NEGATIVITY_TOL:
        i, m = np.unravel_index(np.argmin(U), U.shape)
        raise RefinementError(
            f"negative probability {worst:.3e} at t={grid[i]:.6g}, m={m}; refine the grid (step {h:.3g})"
        )
    return U


def pmf_curves(pmfs, grid) -> list[GridFunction]:
    """Per-m curves ``t -> p_m(t)`` from a sequence of :class:`PmfVector` or a 2-d array."""
    arr = np.asarray([p.probs if isinstance(p, PmfVector) else p for p in pmfs], dtype=float)
    grid = np.asarray(grid, dtype=float)
    if arr.shape[0] != grid.size:
        raise ShapeError(f"{arr.shape[0]} pmfs for {grid.size} grid points")
    return [GridFunction(grid, arr[:, m]) for m in range(arr.shape[1])]


def residual_homogeneous(g: GeneratorSpec, pmf_curves: list[GridFunction], n_corr: int | None = None) -> float:
    """``max |D^alpha p_m(t) - (A p)_m(t)|`` over m and the grid points after t = 0.

    The Caputo derivative is the corrected L1 operator of :func:`fcount.specfun.caputo_l1`
    (``n_corr=0`` gives the plain scheme).
    """
    return _residual_homogeneous(g, pmf_curves, n_corr).max_residual


def _residual_homogeneous(g, curves, n_corr) -> ResidualReport:
    if len(curves) != g.m_max + 1:
        raise ShapeError(f"expected {g.m_max + 1} curves, got {len(curves)}")
    grid = curves[0].grid
    for c in curves:
        if not np.array_equal(c.grid, grid):
            raise ShapeError("all curves must share one grid")
    _uniform_grid_from_zero(grid)
    n_corr = correction_powers(g.alpha).size if n_corr is None else n_corr
    if g.alpha == 1:
        n_corr = 0
    P = np.array([c.values for c in curves])
    D = np.array([caputo_l1(c, g.alpha, n_corr).values for c in curves])
    R = np.abs(D - generator_matrix(g) @ P[:, 1:])
    return _report(R, grid[1:])


def _report(R: np.ndarray, times: np.ndarray, cutoff=None) -> ResidualReport:
    per_m = R.max(axis=1)
    m, i = np.unravel_index(np.argmax(R), R.shape)
    return ResidualReport(float(R[m, i]), per_m, (int(m), float(times[i])), cutoff)


def _increment_laws(family, k, rho, rate: RateFunction, v, u, m_max):
    """Increment pmfs over ``[v, v+u]`` for each node ``u``, and the rate factor at ``u + v``."""
    if family == "FNPPk":
        severity, mult = uniform_severity(k), k
    else:
        severity, mult = trunc_geom_severity(rho, k), 1
    base = rate._cum(np.asarray([v], dtype=float))[0]
    mass = mult * (rate._cum(u + v) - base)
    q = compound_poisson_pmf(np.maximum(mass, 0.0), severity, m_max)
    with np.errstate(invalid="ignore"):
        lam = mult * rate._rate(u + v)
    return q, lam, severity


def residual_nonhomogeneous(
    family: str,
    k: int,
    rate: RateFunction,
    alpha: float,
    grid,
    m_max: int,
    rho: float | None = None,
    v: float = 0.0,
    t_min: float = 0.0,
    rule: SubordinatorRule | None = None,
    n_corr: int | None = None,
    report: bool = False,
):
    """Residual of the integro-differential system of the non-homogeneous fractional families.

    Left side: ``p*_m(t, v) = int p^n_m(u, v) h_alpha(t, u) du`` on ``grid`` by quadrature,
    then the corrected L1 Caputo derivative in t. Right side: the integral of
    ``lam(u+v) [-p^n_m + sum_j f_j p^n_{m-j}]`` (times k for FNPPk) against
    ``h_alpha(t, u)``. Returns the maximum absolute difference over ``m <= m_max`` and
    grid times ``t >= t_min`` (t = 0 excluded), or a :class:`ResidualReport` with
    ``report=True``.
    """
    fam = {"fnppk": "FNPPk", "nfpak": "NFPAk"}.get(str(family).lower())
    if fam is None:
        raise DomainError(f"family must be FNPPk or NFPAk, got {family!r}")
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError("k must be a positive integer")
    if fam == "NFPAk":
        if rho is None or not 0 <= rho < 1:
            raise DomainError("NFPAk requires rho in [0, 1)")
    elif rho is not None:
        raise DomainError("FNPPk takes no rho")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not v >= 0:
        raise DomainError("v must be nonnegative")
    if not isinstance(rate, RateFunction):
        raise DomainError("rate must be a RateFunction")
    grid, _ = _uniform_grid_from_zero(grid)
    rule = subordinator_rule(alpha) if rule is None else rule
    if rule.alpha != alpha:
        raise DomainError("quadrature rule was built for a different alpha")

    n_t = grid.size
    lhs_p = np.empty((m_max + 1, n_t))
    rhs = np.empty((m_max + 1, n_t))
    lhs_p[:, 0] = np.eye(m_max + 1)[0]
    rhs[:, 0] = np.nan
    for i in range(1, n_t):
        u = np.append(rule.nodes(grid[i]), 0.0)
        q, lam, severity = _increment_laws(fam, k, rho, rate, v, u, m_max)
        drift = _jump_matrix(severity, m_max) @ q
        # the u = 0 node only carries the upper-tail mass; an infinite rate there has measure zero
        integrand = np.where(np.isfinite(lam), lam, 0.0) * drift
        w = rule.weights
        lhs_p[:, i] = q[:, :-1] @ w + q[:, -1] * rule.upper_tail
        rhs[:, i] = integrand[:, :-1] @ w + integrand[:, -1] * rule.upper_tail
        if not np.all(np.isfinite(rhs[:, i])):
            bad = int(np.flatnonzero(~np.isfinite(rhs[:, i]))[0])
            raise QuadratureError(f"right-hand side not finite at m={bad}, t={grid[i]}")

    n_corr = correction_powers(alpha).size if n_corr is None else n_corr
    D = np.array([caputo_l1(GridFunction(grid, lhs_p[m]), alpha, n_corr).values for m in range(m_max + 1)])
    sel = grid[1:] >= t_min
    if not np.any(sel):
        raise DomainError("no grid points at or after t_min")
    R = np.abs(D - rhs[:, 1:])[:, sel]
    cutoff = rule.u_cutoff(float(grid[-1]))
    log.debug("u-integral cutoff %.6g (lower-tail mass %.2e)", cutoff, rule.lower_tail)
    rep = _report(R, grid[1:][sel], cutoff)
    return rep if report else rep.max_residual
