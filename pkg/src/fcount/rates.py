"""Deterministic rate functions lambda(t) and their cumulative mass Lambda(t)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import AmbiguityError, DomainError, UnreachableMassError

__all__ = [
    "RateFunction",
    "Constant",
    "Weibull",
    "Makeham",
    "Table",
    "rate_at",
    "cum_mass",
    "invert_cum_mass",
    "parse_rate",
    "load_table_csv",
]

INVERSE_TOL = 1e-10


class RateFunction:
    """Base class: subclasses implement ``_rate`` and ``_cum`` on arrays of t >= 0."""

    kind = "abstract"

    def _rate(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cum(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inverse(self, y: np.ndarray) -> np.ndarray:
        return np.array([_bisect_inverse(self, float(v)) for v in y])

    @property
    def has_flat_segments(self) -> bool:
        return False

    def sup_rate(self, t_end: float) -> float:
        """Upper bound of lambda on [0, t_end] (used for thinning)."""
        grid = np.linspace(0.0, t_end, 257)
        return float(np.max(self._rate(grid)))

    def params(self) -> dict:
        raise NotImplementedError

    def describe(self) -> str:
        body = ",".join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.kind}:{body}"

    def __call__(self, t):
        return rate_at(self, t)


@dataclass(frozen=True)
class Constant(RateFunction):
    lam: float
    kind = "constant"

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"constant rate must be finite and nonnegative, got {self.lam}")

    def _rate(self, t):
        return np.full_like(t, self.lam, dtype=float)

    def _cum(self, t):
        return self.lam * t

    def _inverse(self, y):
        if self.lam == 0:
            if np.any(y > 0):
                raise UnreachableMassError("zero rate never accumulates positive mass")
            return np.zeros_like(y)
        return y / self.lam

    def sup_rate(self, t_end):
        return self.lam

    def params(self):
        return {"lam": self.lam}

    def describe(self):
        return f"constant:{self.lam}"


@dataclass(frozen=True)
class Weibull(RateFunction):
    """lambda(t) = (c/b)(t/b)^(c-1), Lambda(t) = (t/b)^c."""

    b: float
    c: float
    kind = "weibull"

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError(f"Weibull scale b must be positive, got {self.b}")
        # c = 0 would make Lambda jump from 0 to 1 at t = 0+
        if not self.c > 0:
            raise DomainError(f"Weibull shape c must be positive, got {self.c}")

    def _rate(self, t):
        with np.errstate(divide="ignore"):
            return self.c / self.b * (t / self.b) ** (self.c - 1)

    def _cum(self, t):
        return (t / self.b) ** self.c

    def _inverse(self, y):
        return self.b * y ** (1.0 / self.c)

    def sup_rate(self, t_end):
        if self.c < 1:
            return math.inf
        return float(self._rate(np.asarray(t_end, dtype=float)))

    def params(self):
        return {"b": self.b, "c": self.c}


@dataclass(frozen=True)
class Makeham(RateFunction):
    """lambda(t) = c e^(bt) + mu, Lambda(t) = (c/b)(e^(bt) - 1) + mu t."""

    b: float
    c: float
    mu: float = 0.0
    kind = "makeham"

    def __post_init__(self):
        if not (self.b > 0 and self.c > 0 and self.mu >= 0):
            raise DomainError("Makeham requires b > 0, c > 0, mu >= 0")

    def _rate(self, t):
        return self.c * np.exp(self.b * t) + self.mu

    def _cum(self, t):
        return self.c / self.b * np.expm1(self.b * t) + self.mu * t

    def _inverse(self, y):
        # Lambda is convex, so Newton started above the root descends monotonically onto it
        t = np.log1p(self.b * y / self.c) / self.b
        for _ in range(100):
            step = (self._cum(t) - y) / self._rate(t)
            t = np.maximum(t - step, 0.0)
            if np.all(np.abs(step) <= 1e-15 * (1 + t)):
                break
        bad = np.abs(self._cum(t) - y) > INVERSE_TOL * (1 + y)
        if np.any(bad):
            t[bad] = [_bisect_inverse(self, float(v)) for v in y[bad]]
        return t

    def sup_rate(self, t_end):
        return float(self._rate(np.asarray(t_end, dtype=float)))

    def params(self):
        return {"b": self.b, "c": self.c, "mu": self.mu}


@dataclass(frozen=True)
class Table(RateFunction):
    """Piecewise-constant rate: ``values[i]`` on ``[knots[i], knots[i+1])``, last value onward."""

    knots: np.ndarray
    values: np.ndarray
    _cum_knots: np.ndarray = field(init=False, repr=False, compare=False)
    kind = "table"

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size == 0:
            raise DomainError("table needs equally long, nonempty knots and values")
        if knots[0] != 0:
            raise DomainError("table knots must start at 0")
        if np.any(np.diff(knots) <= 0):
            raise DomainError("table knots must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("table rates must be finite and nonnegative")
        cum = np.concatenate([[0.0], np.cumsum(values[:-1] * np.diff(knots))])
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_cum_knots", cum)

    def _segment(self, t):
        return np.searchsorted(self.knots, t, side="right") - 1

    def _rate(self, t):
        return self.values[self._segment(t)]

    def _cum(self, t):
        i = self._segment(t)
        return self._cum_knots[i] + self.values[i] * (t - self.knots[i])

    def _inverse(self, y):
        cum, vals, knots = self._cum_knots, self.values, self.knots
        out = np.empty_like(y)
        for j, v in enumerate(y):
            if v == 0:
                out[j] = 0.0
                continue
            # last segment whose starting mass is below v
            i = int(np.searchsorted(cum, v, side="left")) - 1
            if vals[i] == 0:
                raise UnreachableMassError(f"table rate vanishes beyond t={knots[i]}; mass {v} unreachable")
            if i + 1 < vals.size and cum[i + 1] == v and vals[i + 1] == 0:
                raise AmbiguityError(f"cumulative rate is flat at mass {v}")
            out[j] = knots[i] + (v - cum[i]) / vals[i]
        return out

    @property
    def has_flat_segments(self):
        return bool(np.any(self.values == 0))

    def sup_rate(self, t_end):
        return float(np.max(self.values[: self._segment(np.asarray(t_end)) + 1]))

    def params(self):
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}

    def describe(self):
        return "table:" + ";".join(f"{k}:{v}" for k, v in zip(self.knots, self.values))

    def __hash__(self):
        return hash((self.knots.tobytes(), self.values.tobytes()))

    def __eq__(self, other):
        return (
            isinstance(other, Table)
            and np.array_equal(self.knots, other.knots)
            and np.array_equal(self.values, other.values)
        )


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("time must be nonnegative")
    return arr


def rate_at(r: RateFunction, t):
    """lambda(t); ``+inf`` at t=0 for a Weibull rate with c < 1."""
    arr = _as_times(t)
    out = r._rate(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def cum_mass(r: RateFunction, s, t):
    """Lambda(s, t) = Lambda(t) - Lambda(s) for 0 <= s <= t."""
    s_arr, t_arr = _as_times(s), _as_times(t)
    if np.any(s_arr > t_arr):
        raise DomainError("cum_mass requires s <= t")
    s1, t1 = np.broadcast_arrays(np.atleast_1d(s_arr), np.atleast_1d(t_arr))
    out = r._cum(t1) - r._cum(s1)
    return float(out[0]) if s_arr.ndim == 0 and t_arr.ndim == 0 else out


def _bisect_inverse(r: RateFunction, y: float) -> float:
    if y == 0:
        return 0.0
    hi = 1.0
    while r._cum(np.asarray([hi]))[0] < y:
        hi *= 2.0
        if hi > 1e300:
            raise UnreachableMassError(f"cumulative rate never reaches {y}")
    f = lambda x: float(r._cum(np.asarray([x]))[0]) - y
    t = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(t)) > INVERSE_TOL * (1 + y):
        raise AmbiguityError(f"could not invert cumulative rate at {y}")
    return t


def invert_cum_mass(r: RateFunction, y):
    """Time t with Lambda(t) = y (closed form where available, else root bracketing)."""
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("mass must be nonnegative")
    out = r._inverse(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def load_table_csv(path) -> Table:
    """Read a two-column (time, rate) CSV; a non-numeric first row is treated as a header."""
    rows = []
    with open(Path(path), newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise DomainError(f"{path}: row {i + 1} needs two columns")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise DomainError(f"{path}: non-numeric row {i + 1}") from None
    if not rows:
        raise DomainError(f"{path}: no data rows")
    arr = np.array(rows)
    return Table(arr[:, 0], arr[:, 1])


def parse_rate(text: str) -> RateFunction:
    """Parse ``constant:1.0``, ``weibull:b=2,c=2``, ``makeham:b=1,c=1,mu=0.5`` or ``table:path.csv``."""
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    if kind == "table":
        return load_table_csv(body)
    if kind == "constant":
        if "=" in body:
            body = body.split("=", 1)[1]
        return Constant(float(body))
    params = {}
    for item in filter(None, body.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise DomainError(f"rate parameter {item!r} must look like name=value")
        params[key.strip()] = float(val)
    try:
        if kind == "weibull":
            return Weibull(**params)
        if kind == "makeham":
            return Makeham(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind} rate: {exc}") from None
    raise DomainError(f"unknown rate kind {kind!r}")
