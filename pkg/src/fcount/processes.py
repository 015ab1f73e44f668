"""Path simulators for the eight order-k counting families and seeded ensembles."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .rates import Constant, RateFunction, invert_cum_mass, rate_at
from .sampling import (
    RngStream,
    sample_inverse_subordinator_path,
    sample_mittag_leffler,
    sample_trunc_geom,
    sample_uniform_k,
)

__all__ = [
    "FAMILIES",
    "ProcessSpec",
    "SamplePath",
    "CountGrid",
    "Ensemble",
    "simulate_ppk",
    "simulate_nppk",
    "simulate_pak",
    "simulate_npak",
    "simulate_fppk",
    "simulate_fppk_renewal_path",
    "simulate_fnppk",
    "simulate_fpak",
    "simulate_nfpak",
    "simulate",
    "ensemble",
    "worker_count",
]

FAMILIES = ("PPk", "NPPk", "FPPk", "FNPPk", "PAk", "NPAk", "FPAk", "NFPAk")
_PA = {"PAk", "NPAk", "FPAk", "NFPAk"}
_FRACTIONAL = {"FPPk", "FNPPk", "FPAk", "NFPAk"}
_NONHOM = {"NPPk", "FNPPk", "NPAk", "NFPAk"}


def _canonical_family(name: str) -> str:
    for fam in FAMILIES:
        if fam.lower() == str(name).lower():
            return fam
    raise DomainError(f"unknown family {name!r}; expected one of {', '.join(FAMILIES)}")


@dataclass(frozen=True)
class ProcessSpec:
    """Parameters of one process family.

    Homogeneous families take ``lam``; non-homogeneous ones take ``rate``. ``rho`` is
    required exactly for the Polya-Aeppli families and ``alpha`` exactly for the
    fractional ones (``alpha = 1`` is the classical limit).
    """

    family: str
    k: int
    lam: float | None = None
    rate: RateFunction | None = None
    rho: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        fam = _canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        if fam in _PA:
            if self.rho is None or not 0 <= self.rho < 1:
                raise DomainError(f"{fam} requires rho in [0,1)")
        elif self.rho is not None:
            raise DomainError(f"{fam} takes no rho")
        if fam in _FRACTIONAL:
            if self.alpha is None or not 0 < self.alpha <= 1:
                raise DomainError(f"{fam} requires alpha in (0,1]")
        elif self.alpha is not None:
            raise DomainError(f"{fam} takes no alpha")
        if fam in _NONHOM:
            if not isinstance(self.rate, RateFunction):
                raise DomainError(f"{fam} requires a rate function")
            if self.lam is not None:
                raise DomainError(f"{fam} takes a rate function, not lam")
        else:
            if self.lam is None or not self.lam > 0:
                raise DomainError(f"{fam} requires lam > 0")
            if self.rate is not None:
                raise DomainError(f"{fam} takes lam, not a rate function")

    @property
    def is_fractional(self) -> bool:
        return self.family in _FRACTIONAL

    @property
    def is_polya_aeppli(self) -> bool:
        return self.family in _PA

    @property
    def is_nonhomogeneous(self) -> bool:
        return self.family in _NONHOM

    def rate_function(self) -> RateFunction:
        """The deterministic intensity; homogeneous families get ``Constant(lam)``."""
        return self.rate if self.rate is not None else Constant(self.lam)

    def as_dict(self) -> dict:
        out = {"family": self.family, "k": int(self.k)}
        if self.lam is not None:
            out["lam"] = self.lam
        if self.rate is not None:
            out["rate"] = self.rate.describe()
        if self.rho is not None:
            out["rho"] = self.rho
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out


@dataclass(frozen=True)
class SamplePath:
    """Event times with jump sizes; ``N(t)`` is the sum of jumps at times ``<= t``."""

    event_times: np.ndarray
    jump_sizes: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.event_times, dtype=float)
        jumps = np.asarray(self.jump_sizes, dtype=np.int64)
        if times.shape != jumps.shape or times.ndim != 1:
            raise DomainError("event_times and jump_sizes must be equally long 1-d arrays")
        if times.size and (times[0] <= 0 or times[-1] > self.horizon or np.any(np.diff(times) <= 0)):
            raise DomainError("event times must be strictly increasing in (0, horizon]")
        if np.any(jumps < 1):
            raise DomainError("jump sizes must be positive")
        object.__setattr__(self, "event_times", times)
        object.__setattr__(self, "jump_sizes", jumps)

    def counts_at(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        cum = np.concatenate([[0], np.cumsum(self.jump_sizes)])
        return cum[np.searchsorted(self.event_times, grid, side="right")]

    def to_grid(self, grid) -> "CountGrid":
        return CountGrid(np.asarray(grid, dtype=float), self.counts_at(grid))


@dataclass(frozen=True)
class CountGrid:
    grid: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        grid = _check_grid(self.grid)
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != grid.shape:
            raise DomainError("counts and grid must have the same length")
        if np.any(counts < 0) or np.any(np.diff(counts) < 0):
            raise DomainError("counts must be nonnegative and nondecreasing")
        if grid[0] == 0 and counts[0] != 0:
            raise DomainError("counts must start at 0 when the grid starts at 0")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class Ensemble:
    """Counts of ``n_paths`` independent realizations on a common grid.

    Row ``i`` was generated from ``RngStream(seed, i)``.
    """

    spec: ProcessSpec
    grid: np.ndarray
    counts_matrix: np.ndarray
    seed: int
    options: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.counts_matrix.shape[0]

    def column(self, t_index: int) -> np.ndarray:
        return self.counts_matrix[:, t_index]


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DomainError("grid must be a nonempty 1-d sequence")
    if np.any(g < 0) or np.any(np.diff(g) < 0) or not np.all(np.isfinite(g)):
        raise DomainError("grid must be finite, nonnegative and nondecreasing")
    return g


def _check_horizon(horizon):
    if not (horizon > 0 and math.isfinite(horizon)):
        raise DomainError(f"horizon must be positive and finite, got {horizon}")


# ---------------------------------------------------------------------------
# raw event generators (no validation; shared by the public simulators and ensembles)


def _poisson_epochs(rng: RngStream, total_rate: float, horizon: float) -> np.ndarray:
    n = rng.gen.poisson(total_rate * horizon)
    times = np.sort(rng.gen.uniform(0.0, horizon, n))
    # a draw of exactly 0 has probability 2^-53; keep event times strictly positive anyway
    return times[times > 0] if n and times[0] == 0 else times


def _nonhomogeneous_epochs(
    rng: RngStream, multiplier: float, rate: RateFunction, horizon: float, offset: float = 0.0, thinning_bound=None
) -> np.ndarray:
    """Epochs on (0, horizon] of a Poisson process with intensity ``multiplier * rate(offset + u)``."""
    if thinning_bound is None and not rate.has_flat_segments:
        base, top = rate._cum(np.asarray([offset, offset + horizon]))
        n = rng.gen.poisson(multiplier * (top - base))
        s = np.sort(rng.gen.uniform(0.0, top - base, n))
        times = np.minimum(invert_cum_mass(rate, base + s) - offset, horizon)
        return times[times > 0]
    bound = rate.sup_rate(offset + horizon) if thinning_bound is None else float(thinning_bound)
    if bound == 0:
        return np.empty(0)
    if not (bound > 0 and math.isfinite(bound)):
        raise DomainError("thinning needs a finite positive rate bound")
    cand = _poisson_epochs(rng, multiplier * bound, horizon)
    lam = rate_at(rate, offset + cand)
    if np.any(lam > bound * (1 + 1e-12)):
        raise DomainError("thinning bound is below the rate on the horizon")
    return cand[rng.gen.random(cand.size) * bound < lam]


def _renewal_epochs(rng: RngStream, alpha: float, scale: float, horizon: float) -> np.ndarray:
    pieces, last, batch = [], 0.0, 32
    while last <= horizon:
        arr = last + np.cumsum(sample_mittag_leffler(rng, alpha, scale, batch))
        pieces.append(arr)
        last = arr[-1]
        batch = min(4 * batch, 1 << 20)
    t = np.concatenate(pieces)
    return t[(t <= horizon) & (t > 0)]


def _counts(times: np.ndarray, jumps: np.ndarray, at: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0], np.cumsum(jumps)])
    return cum[np.searchsorted(times, at, side="right")]


def _ml_scale(k, lam, alpha, ml_scale):
    if ml_scale == "standard":
        return (k * lam) ** (-1.0 / alpha)
    if ml_scale == "lambda":
        return lam
    raise DomainError(f"unknown ml_scale {ml_scale!r}")


def _raw_counts(rng: RngStream, spec: ProcessSpec, grid: np.ndarray, options: dict) -> np.ndarray:
    """Counts of one realization on a validated grid.

    Fractional families draw the clock path first, then the outer process on
    operational time ``[0, Y(grid[-1])]`` (plus offset ``v`` where supported).
    """
    fam, k = spec.family, spec.k
    opts = dict(options)
    pa = spec.is_polya_aeppli

    def jumps(n):
        return sample_trunc_geom(rng, spec.rho, k, n) if pa else sample_uniform_k(rng, k, n)

    multiplier = 1.0 if pa else float(k)
    if spec.is_fractional:
        method = opts.pop("method", "timechange")
        step = opts.pop("step", None)
        ml_scale = opts.pop("ml_scale", "standard")
        v = opts.pop("v", 0.0)
        if v < 0:
            raise DomainError("offset v must be nonnegative")
        if method == "renewal":
            if spec.is_nonhomogeneous:
                raise DomainError("the renewal method needs a constant rate")
            scale = _ml_scale(k, spec.lam, spec.alpha, ml_scale) if not pa else spec.lam ** (-1.0 / spec.alpha)
            times = _renewal_epochs(rng, spec.alpha, scale, float(grid[-1]))
            return _counts(times, jumps(times.size), grid)
        if method != "timechange":
            raise DomainError(f"unknown method {method!r}")
        at = sample_inverse_subordinator_path(rng, spec.alpha, grid, step)
    else:
        at = grid
    if opts.keys() - {"thinning_bound"}:
        raise DomainError(f"unsupported options for {fam}: {sorted(opts)}")
    horizon = float(at[-1])
    if horizon <= 0:
        return np.zeros(grid.size, dtype=np.int64)
    if spec.is_nonhomogeneous:
        off = v if spec.is_fractional else 0.0
        times = _nonhomogeneous_epochs(rng, multiplier, spec.rate, horizon, off, opts.get("thinning_bound"))
    else:
        if "thinning_bound" in opts:
            raise DomainError("thinning_bound applies to non-homogeneous families only")
        times = _poisson_epochs(rng, multiplier * spec.lam, horizon)
    return _counts(times, jumps(times.size), at)


# ---------------------------------------------------------------------------
# public simulators


def _path(rng, times, jump_fn, horizon) -> SamplePath:
    return SamplePath(times, jump_fn(times.size), horizon)


def simulate_ppk(rng: RngStream, k: int, lam: float, horizon: float) -> SamplePath:
    """Poisson process of order k: rate k*lam epochs, jumps uniform on 1..k."""
    ProcessSpec("PPk", k, lam=lam)
    _check_horizon(horizon)
    return _path(rng, _poisson_epochs(rng, k * lam, horizon), lambda n: sample_uniform_k(rng, k, n), horizon)


def simulate_pak(rng: RngStream, k: int, rho: float, lam: float, horizon: float) -> SamplePath:
    """Polya-Aeppli process of order k: rate lam epochs, truncated geometric jumps."""
    ProcessSpec("PAk", k, lam=lam, rho=rho)
    _check_horizon(horizon)
    return _path(rng, _poisson_epochs(rng, lam, horizon), lambda n: sample_trunc_geom(rng, rho, k, n), horizon)


def simulate_nppk(rng: RngStream, k: int, rate: RateFunction, horizon: float, *, thinning_bound=None) -> SamplePath:
    """Non-homogeneous Poisson process of order k with cumulative epoch mass k*Lambda(t).

    Epochs come from a unit-rate process mapped through the inverse of Lambda; rates with
    flat stretches (where that inverse is ambiguous) fall back to thinning.
    """
    ProcessSpec("NPPk", k, rate=rate)
    _check_horizon(horizon)
    times = _nonhomogeneous_epochs(rng, float(k), rate, horizon, 0.0, thinning_bound)
    return _path(rng, times, lambda n: sample_uniform_k(rng, k, n), horizon)


def simulate_npak(
    rng: RngStream, k: int, rho: float, rate: RateFunction, horizon: float, *, thinning_bound=None
) -> SamplePath:
    """Non-homogeneous Polya-Aeppli process of order k (epoch mass Lambda(t))."""
    ProcessSpec("NPAk", k, rate=rate, rho=rho)
    _check_horizon(horizon)
    times = _nonhomogeneous_epochs(rng, 1.0, rate, horizon, 0.0, thinning_bound)
    return _path(rng, times, lambda n: sample_trunc_geom(rng, rho, k, n), horizon)


def simulate_fppk(
    rng: RngStream,
    k: int,
    lam: float,
    alpha: float,
    grid,
    method: str = "timechange",
    *,
    step: float | None = None,
    ml_scale: str = "standard",
) -> CountGrid:
    """Fractional Poisson process of order k on ``grid``.

    ``timechange`` draws one inverse-subordinator path on the grid and evaluates an
    independent PPk at those operational times. ``renewal`` uses Mittag-Leffler waiting
    times with scale ``(k lam)^(-1/alpha)``; ``ml_scale="lambda"`` instead uses scale
    ``lam`` itself, which gives a different process unless ``k lam = lam^(-alpha)``.
    """
    spec = ProcessSpec("FPPk", k, lam=lam, alpha=alpha)
    return simulate(rng, spec, grid, method=method, step=step, ml_scale=ml_scale)


def simulate_fppk_renewal_path(rng: RngStream, k: int, lam: float, alpha: float, horizon: float) -> SamplePath:
    """Exact FPPk event times on ``[0, horizon]`` from Mittag-Leffler waiting times."""
    ProcessSpec("FPPk", k, lam=lam, alpha=alpha)
    _check_horizon(horizon)
    times = _renewal_epochs(rng, alpha, (k * lam) ** (-1.0 / alpha), horizon)
    return _path(rng, times, lambda n: sample_uniform_k(rng, k, n), horizon)


def simulate_fnppk(
    rng: RngStream, k: int, rate: RateFunction, alpha: float, grid, *, v: float = 0.0, step: float | None = None
) -> CountGrid:
    """N^n(v + Y(t)) - N^n(v) for an NPPk N^n and an independent clock Y; ``v = 0`` gives N^n(Y(t))."""
    return simulate(rng, ProcessSpec("FNPPk", k, rate=rate, alpha=alpha), grid, v=v, step=step)


def simulate_fpak(
    rng: RngStream,
    k: int,
    rho: float,
    lam: float,
    alpha: float,
    grid,
    method: str = "timechange",
    *,
    step: float | None = None,
) -> CountGrid:
    """Fractional Polya-Aeppli process of order k, N_PAk(Y(t))."""
    return simulate(rng, ProcessSpec("FPAk", k, lam=lam, rho=rho, alpha=alpha), grid, method=method, step=step)


def simulate_nfpak(
    rng: RngStream,
    k: int,
    rho: float,
    rate: RateFunction,
    alpha: float,
    grid,
    *,
    v: float = 0.0,
    step: float | None = None,
) -> CountGrid:
    """N_PAk(Lambda(Y(t))), built as a non-homogeneous PAk read at the clock Y(t) (+ offset v)."""
    return simulate(rng, ProcessSpec("NFPAk", k, rate=rate, rho=rho, alpha=alpha), grid, v=v, step=step)


def simulate(rng: RngStream, spec: ProcessSpec, grid, **options) -> CountGrid:
    """One realization of ``spec`` on ``grid``; options go to the family simulator."""
    grid = _check_grid(grid)
    return CountGrid(grid, _raw_counts(rng, spec, grid, options))


def worker_count(default: int | None = None) -> int:
    """Thread cap from ``FCOUNT_THREADS`` (falls back to the CPU count)."""
    env = os.environ.get("FCOUNT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"FCOUNT_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError("FCOUNT_THREADS must be at least 1")
        return n
    return default or os.cpu_count() or 1


def ensemble(
    rng: RngStream | int,
    spec: ProcessSpec,
    n_paths: int,
    grid,
    *,
    threads: int | None = None,
    **options,
) -> Ensemble:
    """``n_paths`` independent realizations; path ``i`` uses ``RngStream(seed, i)``.

    Rows do not depend on the number of worker threads.
    """
    if not (isinstance(n_paths, (int, np.integer)) and n_paths >= 1):
        raise DomainError("n_paths must be a positive integer")
    seed = rng.seed if isinstance(rng, RngStream) else int(rng)
    grid = _check_grid(grid)
    out = np.empty((n_paths, grid.size), dtype=np.int64)

    def fill(rows):
        for i in rows:
            out[i] = _raw_counts(RngStream(seed, i), spec, grid, options)

    n_workers = min(threads or worker_count(), n_paths)
    if n_workers <= 1:
        fill(range(n_paths))
    else:
        chunks = np.array_split(np.arange(n_paths), n_workers)
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(fill, chunks))
    if np.any(np.diff(out, axis=1) < 0) or np.any(out < 0) or (grid[0] == 0 and np.any(out[:, 0] != 0)):
        raise AssertionError("simulated counts violate the count-path invariants")
    return Ensemble(spec, grid, out, seed, dict(options))
