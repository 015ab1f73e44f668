"""Seedable samplers for jump sizes, Mittag-Leffler waiting times and the stable subordinator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "SubordinatorLattice",
    "sample_uniform_k",
    "sample_trunc_geom",
    "sample_mittag_leffler",
    "sample_pos_stable",
    "sample_inverse_subordinator_at",
    "sample_subordinator_lattice",
    "sample_inverse_subordinator_path",
    "sample_inverse_subordinator_paths",
    "default_path_step",
]

_U64 = 2**64


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct pairs map to independent PCG64 states through ``SeedSequence`` spawn keys.
    """

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= int(v) < _U64):
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {v!r}")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def open_uniform(self, size=None):
        """Uniform draws on (0, 1]."""
        return 1.0 - self.gen.random(size)


def _check_k(k):
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError(f"k must be a positive integer, got {k!r}")


def _check_alpha(alpha, closed=True):
    ok = 0 < alpha <= 1 if closed else 0 < alpha < 1
    if not ok:
        raise DomainError(f"alpha must lie in (0,{'1]' if closed else '1)'}, got {alpha}")


def sample_uniform_k(rng: RngStream, k: int, size=None):
    """Jump sizes uniform on {1, ..., k}."""
    _check_k(k)
    return rng.gen.integers(1, k + 1, size=size)


def sample_trunc_geom(rng: RngStream, rho: float, k: int, size=None):
    """Truncated geometric jumps, P[X=m] = (1-rho) rho^(m-1) / (1-rho^k) on {1, ..., k}."""
    _check_k(k)
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0,1), got {rho}")
    if rho == 0 or k == 1:
        return np.ones(size, dtype=np.int64) if size is not None else 1
    u = rng.gen.random(size)
    # inverse cdf: F(m) = (1 - rho^m) / (1 - rho^k)
    m = np.ceil(np.log1p(-u * -math.expm1(k * math.log(rho))) / math.log(rho))
    m = np.clip(m, 1, k).astype(np.int64)
    return m if size is not None else int(m)


def sample_mittag_leffler(rng: RngStream, alpha: float, scale: float, size=None):
    """Waiting times with survival E_alpha(-(t/scale)^alpha).

    Uses -scale * log(u) * (sin(a pi)/tan(a pi v) - cos(a pi))^(1/a) with u, v uniform.
    """
    _check_alpha(alpha)
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    u = rng.open_uniform(size)
    v = rng.open_uniform(size)
    if alpha == 1:
        return -scale * np.log(u)
    ap = alpha * math.pi
    bracket = math.sin(ap) / np.tan(ap * v) - math.cos(ap)
    return -scale * np.log(u) * bracket ** (1.0 / alpha)


def sample_pos_stable(rng: RngStream, alpha: float, size=None):
    """Draws of L_alpha(1), the positive stable law with E exp(-s S) = exp(-s^alpha)."""
    _check_alpha(alpha, closed=False)
    phi = math.pi * rng.open_uniform(size)
    e = rng.gen.standard_exponential(size)
    # S = (A(phi) / E)^((1-alpha)/alpha) with Kanter's A, evaluated in logs
    log_num = alpha * np.log(np.sin(alpha * phi)) + (1 - alpha) * np.log(np.sin((1 - alpha) * phi))
    return np.exp((log_num - np.log(np.sin(phi))) / alpha - (1 - alpha) / alpha * np.log(e))


def sample_inverse_subordinator_at(rng: RngStream, alpha: float, t: float, size=None):
    """Exact draws of Y_alpha(t) through Y_alpha(t) = (t / L_alpha(1))^alpha in law.

    ``alpha=1`` returns ``t`` itself (Y_1(t) = t).
    """
    _check_alpha(alpha)
    if t < 0:
        raise DomainError("t must be nonnegative")
    if alpha == 1 or t == 0:
        return np.full(size, float(t)) if size is not None else float(t)
    return (t / sample_pos_stable(rng, alpha, size)) ** alpha


@dataclass(frozen=True)
class SubordinatorLattice:
    """L_alpha sampled at operational times ``u = 0, step, 2 step, ...``."""

    alpha: float
    step: float
    values: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    def inverse(self, t):
        """First-passage time Y(t), linear between lattice points so Y(0) = 0 and Y is continuous."""
        return np.interp(t, self.values, self.u)

    def at(self, u):
        """L at operational times ``u`` by linear interpolation."""
        return np.interp(u, self.u, self.values)


def default_path_step(alpha: float, horizon: float) -> float:
    """A thousandth of the expected operational time E[Y(horizon)]."""
    if horizon <= 0:
        return 1e-3
    return 1e-3 * horizon**alpha / math.gamma(1 + alpha)


def sample_subordinator_lattice(rng: RngStream, alpha: float, step: float, until: float) -> SubordinatorLattice:
    """Simulate L_alpha on a lattice of spacing ``step`` until it exceeds ``until``."""
    _check_alpha(alpha)
    if not step > 0:
        raise DomainError("step must be positive")
    if alpha == 1:
        n = int(math.ceil(until / step)) + 1
        return SubordinatorLattice(alpha, step, step * np.arange(n + 1))
    scale = step ** (1.0 / alpha)
    chunk = max(64, int(1.5 * (until / scale) ** alpha))
    chunk = min(chunk, 1_000_000)
    pieces, last = [np.zeros(1)], 0.0
    while last <= until:
        inc = scale * sample_pos_stable(rng, alpha, chunk)
        part = last + np.cumsum(inc)
        pieces.append(part)
        last = part[-1]
    return SubordinatorLattice(alpha, step, np.concatenate(pieces))


def sample_inverse_subordinator_path(rng: RngStream, alpha: float, grid, step: float | None = None) -> np.ndarray:
    """One path of Y_alpha evaluated on ``grid``.

    L_alpha is simulated on an operational lattice of spacing ``step`` and inverted by first
    passage, interpolating linearly inside the crossing cell.
    """
    _check_alpha(alpha)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty 1-d sequence")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be nondecreasing and nonnegative")
    end = float(grid[-1])
    if alpha == 1:
        return grid.copy()
    if end == 0:
        return np.zeros_like(grid)
    step = default_path_step(alpha, end) if step is None else step
    if not step > 0:
        raise DomainError("step must be positive")
    return sample_subordinator_lattice(rng, alpha, step, end).inverse(grid)


def sample_inverse_subordinator_paths(
    rng: RngStream, alpha: float, grid, n_paths: int, step: float | None = None, batch: int = 8192
) -> np.ndarray:
    """``n_paths`` independent paths of Y_alpha on ``grid`` as an ``(n_paths, len(grid))`` array.

    Same lattice construction as :func:`sample_inverse_subordinator_path`, advanced for a
    batch of paths at once; all paths share the one stream ``rng``.
    """
    _check_alpha(alpha)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty 1-d sequence")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be nondecreasing and nonnegative")
    if not (isinstance(n_paths, (int, np.integer)) and n_paths >= 1):
        raise DomainError("n_paths must be a positive integer")
    end = float(grid[-1])
    if alpha == 1 or end == 0:
        return np.tile(grid if alpha == 1 else np.zeros_like(grid), (n_paths, 1))
    step = default_path_step(alpha, end) if step is None else step
    if not step > 0:
        raise DomainError("step must be positive")
    scale = step ** (1.0 / alpha)
    chunk = max(16, int(0.5 * (end / scale) ** alpha))
    out = np.zeros((n_paths, grid.size))
    for lo in range(0, n_paths, batch):
        rows = min(batch, n_paths - lo)
        block = np.zeros((rows, grid.size))
        level = np.zeros(rows)
        done = grid[None, :] <= 0.0
        done = np.repeat(done, rows, axis=0)
        active = np.arange(rows)
        u0 = 0.0
        while active.size:
            inc = scale * sample_pos_stable(rng, alpha, (active.size, chunk))
            vals = np.concatenate([level[active, None], level[active, None] + np.cumsum(inc, axis=1)], axis=1)
            for j, t in enumerate(grid):
                todo = ~done[active, j] & (vals[:, -1] >= t)
                if not np.any(todo):
                    continue
                v = vals[todo]
                i = np.sum(v < t, axis=1)
                lo_v = v[np.arange(v.shape[0]), i - 1]
                hi_v = v[np.arange(v.shape[0]), i]
                rows_j = active[todo]
                block[rows_j, j] = u0 + step * (i - 1 + (t - lo_v) / (hi_v - lo_v))
                done[rows_j, j] = True
            level[active] = vals[:, -1]
            u0 += chunk * step
            active = active[level[active] < end]
        out[lo : lo + rows] = block
    return out
