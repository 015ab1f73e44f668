"""Command-line front end.

Every command writes one artifact: ``#`` comment lines carrying the full
configuration, then a CSV header row and data rows, or the same content as a
single JSON document. Given the same arguments and seed the output is
byte-identical; pass ``--no-timestamp`` to make the whole file identical.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analytics import correlation_curve, lrd_constant, lrd_fit, moments
from .distributions import (
    pmf_fppk,
    pmf_poisson_order_k,
    pmf_polya_aeppli_order_k,
    pmf_subordinated,
    trunc_geom_severity,
    uniform_severity,
)
from .errors import FcountError
from .governing import (
    GeneratorSpec,
    _residual_homogeneous,
    pmf_curves,
    residual_nonhomogeneous,
    solve_fractional_master,
)
from .processes import FAMILIES, ProcessSpec, ensemble
from .rates import RateFunction, cum_mass, parse_rate

COMMANDS = ("simulate", "pmf", "moments", "cov", "lrd", "solve", "check-governing")
_PA = {"PAk", "NPAk", "FPAk", "NFPAk"}
_FRACTIONAL = {"FPPk", "FNPPk", "FPAk", "NFPAk"}
_NONHOM = {"NPPk", "FNPPk", "NPAk", "NFPAk"}


class UsageError(Exception):
    """Invalid or inconsistent flags; reported with exit status 2."""


@dataclass
class RunConfig:
    command: str
    spec: ProcessSpec | None
    params: dict
    seed: int | None = None
    n_paths: int | None = None
    grid: np.ndarray | None = None
    output: str | None = None
    fmt: str = "csv"
    timestamp: bool = True
    extra: dict = field(default_factory=dict)


@dataclass
class Artifact:
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, *, process=True, seed=False, grid=False):
    if process:
        p.add_argument("--family", type=str.lower, choices=[f.lower() for f in FAMILIES], help="process family")
        p.add_argument("--k", type=int, help="order k (largest jump size)")
        p.add_argument("--lambda", dest="lam", type=float, help="constant intensity (homogeneous families)")
        p.add_argument("--rho", type=float, help="Polya-Aeppli parameter in [0, 1)")
        p.add_argument("--alpha", type=float, help="fractional index in (0, 1]")
        p.add_argument(
            "--rate",
            help="intensity function: constant:1.0, weibull:b=2,c=2, makeham:b=1,c=1,mu=0.5, table:path.csv",
        )
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    if grid:
        p.add_argument("--t-start", type=float, help="first grid time")
        p.add_argument("--t-end", type=float, help="last grid time")
        p.add_argument("--n-points", type=int, help="number of grid points")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", help="output file (default: standard output)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the creation time from the header")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcount", description="Order-k counting processes: simulate, evaluate, verify.")
    parser.add_argument("--version", action="version", version=f"fcount {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", help="seeded ensemble of N(t) on a grid")
    _add_common(p, seed=True, grid=True)
    p.add_argument("--n-paths", type=int, default=1000)

    p = sub.add_parser("pmf", help="marginal pmf of N(t), or of a classical law with given mass")
    _add_common(p)
    p.add_argument("--t", type=float, help="time")
    p.add_argument("--mass", type=float, help="directing mass Lambda (classical families only)")
    p.add_argument("--m-max", type=int, default=20)

    p = sub.add_parser("moments", help="mean, variance and optionally Cov[N(t), N(s)]")
    _add_common(p, seed=True)
    p.add_argument("--t", type=float, help="time")
    p.add_argument("--s", type=float, help="second time for the covariance")
    p.add_argument("--n-paths", type=int, help="Monte Carlo paths for non-homogeneous fractional covariances")

    p = sub.add_parser("cov", help="Cov[N(t), N(s)] and correlation for t on a grid")
    _add_common(p, seed=True, grid=True)
    p.add_argument("--s", type=float, help="fixed second time")
    p.add_argument("--n-paths", type=int, help="Monte Carlo paths for non-homogeneous fractional covariances")

    p = sub.add_parser("lrd", help="exact correlation decay with power-law fit")
    _add_common(p, grid=True)
    p.add_argument("--s", type=float, default=1.0, help="fixed earlier time (default 1)")
    p.add_argument("--fit-start", type=float, help="lower end of the fit range (default: grid start)")
    p.add_argument("--fit-end", type=float, help="upper end of the fit range (default: grid end)")

    p = sub.add_parser("solve", help="numerical solution of the fractional master equations")
    _add_common(p, grid=True)
    p.add_argument("--m-max", type=int, default=20)
    p.add_argument("--substeps", type=int, default=1, help="internal steps per output step")

    p = sub.add_parser("check-governing", help="residual of the governing equations")
    _add_common(p, grid=True)
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument(
        "--source", choices=("solver", "series"), default="solver", help="curves to check for FPPk/FPAk"
    )
    p.add_argument("--v", type=float, default=0.0, help="time offset of the non-homogeneous increment")
    p.add_argument("--t-min", type=float, default=0.0, help="ignore residuals before this time")
    return parser


def _flag(name: str) -> str:
    return {"lam": "--lambda"}.get(name, "--" + name.replace("_", "-"))


def _spec_from_args(args, *, allow_mass=False) -> ProcessSpec | None:
    """Validate the family parameters; raises UsageError naming every bad flag."""
    if args.family is None:
        raise UsageError("missing required flags: --family")
    fam = next(f for f in FAMILIES if f.lower() == args.family)
    mass = getattr(args, "mass", None)
    missing, extra = [], []
    if args.k is None:
        missing.append("--k")
    if fam in _PA:
        if args.rho is None:
            missing.append("--rho")
    elif args.rho is not None:
        extra.append("--rho")
    if fam in _FRACTIONAL:
        if args.alpha is None:
            missing.append("--alpha")
    elif args.alpha is not None:
        extra.append("--alpha")
    if mass is not None:
        if not allow_mass or fam in _FRACTIONAL:
            extra.append("--mass")
        for name in ("lam", "rate"):
            if getattr(args, name) is not None:
                extra.append(_flag(name))
    elif fam in _NONHOM:
        if args.rate is None:
            missing.append("--rate")
        if args.lam is not None:
            extra.append("--lambda")
    else:
        if args.lam is None:
            missing.append("--lambda")
        if args.rate is not None:
            extra.append("--rate")
    _raise_usage(fam, missing, extra)
    if mass is not None:
        bad = [f for f, ok in (("--k", args.k >= 1), ("--mass", mass >= 0)) if not ok]
        if args.rho is not None and not 0 <= args.rho < 1:
            bad.append("--rho")
        if bad:
            raise UsageError(f"out-of-range values for {fam}: {', '.join(bad)}")
        return None
    rate = None
    if args.rate is not None:
        try:
            rate = parse_rate(args.rate)
        except (FcountError, ValueError, OSError) as exc:
            raise UsageError(f"invalid --rate {args.rate!r}: {exc}") from None
    try:
        return ProcessSpec(fam, args.k, lam=args.lam, rate=rate, rho=args.rho, alpha=args.alpha)
    except FcountError as exc:
        raise UsageError(str(exc)) from None


def _raise_usage(fam, missing, extra):
    parts = []
    if missing:
        parts.append(f"missing required flags for {fam}: {', '.join(missing)}")
    if extra:
        parts.append(f"flags not accepted for {fam} here: {', '.join(extra)}")
    if parts:
        raise UsageError("; ".join(parts))


def _grid_from_args(args, *, default_start=0.0, single_point=False, log=False) -> np.ndarray:
    if args.t_end is None:
        raise UsageError("missing required flags: --t-end")
    if args.n_points is None:
        if single_point:
            if args.t_start is not None:
                raise UsageError("--t-start requires --n-points")
            return np.array([args.t_end])
        raise UsageError("missing required flags: --n-points")
    start = default_start if args.t_start is None else args.t_start
    if args.n_points < 2:
        raise UsageError("--n-points must be at least 2")
    if not (0 <= start < args.t_end) or (log and start <= 0):
        raise UsageError("need 0 <= --t-start < --t-end" + (" and --t-start > 0" if log else ""))
    if log:
        return np.geomspace(start, args.t_end, args.n_points)
    return np.linspace(start, args.t_end, args.n_points)


def config_from_args(args) -> RunConfig:
    cmd = args.command
    base = dict(output=args.output, fmt=args.fmt, timestamp=not args.no_timestamp)
    if cmd == "simulate":
        spec = _spec_from_args(args)
        if args.n_paths < 1:
            raise UsageError("--n-paths must be positive")
        grid = _grid_from_args(args, single_point=True)
        return RunConfig(cmd, spec, {}, seed=args.seed, n_paths=args.n_paths, grid=grid, **base)
    if cmd == "pmf":
        spec = _spec_from_args(args, allow_mass=True)
        if args.mass is not None and args.t is not None:
            raise UsageError("conflicting flags: --mass and --t")
        if args.mass is None and args.t is None:
            raise UsageError("missing required flags: --t (or --mass for classical families)")
        if args.m_max < 0:
            raise UsageError("--m-max must be nonnegative")
        fam = next(f for f in FAMILIES if f.lower() == args.family)
        params = {"family": fam, "k": args.k, "rho": args.rho}
        return RunConfig(cmd, spec, params, extra={"t": args.t, "mass": args.mass, "m_max": args.m_max}, **base)
    if cmd in ("moments", "cov"):
        spec = _spec_from_args(args)
        if cmd == "moments":
            if args.t is None:
                raise UsageError("missing required flags: --t")
            grid = None
        else:
            if args.s is None:
                raise UsageError("missing required flags: --s")
            grid = _grid_from_args(args)
        mc = {}
        if args.n_paths is not None:
            if spec.family not in ("FNPPk", "NFPAk"):
                raise UsageError(f"flags not accepted for {spec.family} here: --n-paths")
            mc["n_mc"] = args.n_paths
        if spec.family in ("FNPPk", "NFPAk"):
            mc["seed"] = args.seed
        extra = {"t": getattr(args, "t", None), "s": args.s, "mc": mc}
        return RunConfig(cmd, spec, {}, seed=args.seed if mc else None, n_paths=args.n_paths, grid=grid, extra=extra, **base)
    if cmd == "lrd":
        spec = _spec_from_args(args)
        if spec.family not in ("FPPk", "FPAk"):
            raise UsageError("lrd supports --family fppk or fpak")
        if not 0 < spec.alpha < 1:
            raise UsageError("lrd needs --alpha strictly between 0 and 1")
        if args.t_end is None:
            args.t_end = 1e4
        if args.n_points is None:
            args.n_points = 41
        grid = _grid_from_args(args, default_start=1e2, log=True)
        fit = (args.fit_start or grid[0], args.fit_end or grid[-1])
        return RunConfig(cmd, spec, {}, grid=grid, extra={"s": args.s, "fit_range": fit}, **base)
    # solve and check-governing
    spec = _spec_from_args(args)
    grid = _grid_from_args(args)
    if grid[0] != 0:
        raise UsageError("the governing-equation grid must start at --t-start 0")
    if args.m_max < 0:
        raise UsageError("--m-max must be nonnegative")
    extra = {"m_max": args.m_max}
    if cmd == "solve":
        if spec.family not in ("FPPk", "FPAk"):
            raise UsageError("solve supports --family fppk or fpak")
        if args.substeps < 1:
            raise UsageError("--substeps must be positive")
        extra["substeps"] = args.substeps
    else:
        if spec.family not in ("FPPk", "FPAk", "FNPPk", "NFPAk"):
            raise UsageError("check-governing supports fppk, fpak, fnppk and nfpak")
        if args.source == "series" and spec.family != "FPPk":
            raise UsageError("--source series is available for fppk only")
        extra.update(source=args.source, v=args.v, t_min=args.t_min)
    return RunConfig(cmd, spec, {}, grid=grid, extra=extra, **base)


# ---------------------------------------------------------------------------
# commands


def _run_simulate(cfg: RunConfig) -> Artifact:
    e = ensemble(cfg.seed, cfg.spec, cfg.n_paths, cfg.grid)
    columns = ["path"] + [f"N({_num(t)})" for t in cfg.grid]
    rows = [[i, *map(int, row)] for i, row in enumerate(e.counts_matrix)]
    last = e.counts_matrix[:, -1]
    summary = {"sample_mean": float(last.mean()), "sample_variance": float(last.var(ddof=1)) if last.size > 1 else math.nan}
    return Artifact(columns, rows, summary)


def _run_pmf(cfg: RunConfig) -> Artifact:
    x = cfg.extra
    m_max = x["m_max"]
    spec = cfg.spec
    tail = None
    if spec is None:
        fam = cfg.params["family"]
        k, rho, mass = cfg.params["k"], cfg.params["rho"], x["mass"]
        pv = pmf_polya_aeppli_order_k(k, rho, mass, m_max) if fam in _PA else pmf_poisson_order_k(k, mass, m_max)
        probs, tail = pv.probs, pv.tail_mass_bound
    else:
        fam, k, t = spec.family, spec.k, x["t"]
        severity = trunc_geom_severity(spec.rho, k) if spec.is_polya_aeppli else uniform_severity(k)
        mult = 1 if spec.is_polya_aeppli else k
        rate: RateFunction = spec.rate_function()
        if fam == "FPPk":
            pv = pmf_fppk(k, spec.lam, spec.alpha, t, m_max)
            probs, tail = pv.probs, pv.tail_mass_bound
        elif spec.is_fractional:
            probs = np.clip(
                pmf_subordinated(severity, lambda u: mult * cum_mass(rate, 0.0, u), spec.alpha, t, m_max), 0, 1
            )
        else:
            mass = cum_mass(rate, 0.0, t)
            pv = pmf_polya_aeppli_order_k(k, spec.rho, mass, m_max) if spec.is_polya_aeppli else pmf_poisson_order_k(k, mass, m_max)
            probs, tail = pv.probs, pv.tail_mass_bound
    rows = [[m, float(p)] for m, p in enumerate(probs)]
    summary = {"total_mass": float(np.sum(probs))}
    if tail is not None:
        summary["tail_mass_bound"] = float(tail)
    return Artifact(["m", "probability"], rows, summary)


def _run_moments(cfg: RunConfig) -> Artifact:
    rep = moments(cfg.spec, cfg.extra["t"], cfg.extra["s"], **cfg.extra["mc"])
    d = rep.as_dict()
    ses = d.pop("standard_errors", {})
    method = d.pop("method")
    rows = [[name, float(v), float(ses[name]) if name in ses else math.nan] for name, v in d.items()]
    return Artifact(["quantity", "value", "standard_error"], rows, {"method": method})


def _run_cov(cfg: RunConfig) -> Artifact:
    s = cfg.extra["s"]
    rows, methods = [], set()
    for t in cfg.grid:
        rep = moments(cfg.spec, float(t), s, **cfg.extra["mc"])
        se = (rep.standard_errors or {}).get("covariance", math.nan)
        corr = rep.correlation if rep.correlation is not None else math.nan
        rows.append([float(t), rep.covariance, se, corr])
        methods.add(rep.method)
    return Artifact(["t", "covariance", "standard_error", "correlation"], rows, {"s": s, "method": sorted(methods)})


def _run_lrd(cfg: RunConfig) -> Artifact:
    spec, s = cfg.spec, cfg.extra["s"]
    params = {"k": spec.k, "lam": spec.lam}
    if spec.rho is not None:
        params["rho"] = spec.rho
    curve = correlation_curve(spec.family, params, spec.alpha, s, cfg.grid)
    const = lrd_constant(spec.family, params, spec.alpha, s)
    rep = lrd_fit(curve, cfg.extra["fit_range"], const)
    rows = [[float(t), float(c), float(c * t**spec.alpha)] for t, c in zip(curve.grid, curve.values)]
    summary = {
        "fitted_exponent": rep.fitted_exponent,
        "fitted_constant": rep.fitted_constant,
        "theoretical_constant": const,
        "fit_range": list(rep.fit_range),
        "fit_residual": rep.residual,
        "fit_points": rep.n_points,
    }
    return Artifact(["t", "correlation", "correlation_times_t_alpha"], rows, summary)


def _generator(cfg: RunConfig) -> GeneratorSpec:
    spec = cfg.spec
    return GeneratorSpec(spec.family, spec.k, spec.lam, spec.alpha, cfg.extra["m_max"], rho=spec.rho)


def _run_solve(cfg: RunConfig) -> Artifact:
    pmfs = solve_fractional_master(_generator(cfg), cfg.grid, substeps=cfg.extra["substeps"])
    m_max = cfg.extra["m_max"]
    rows = [[float(t), *map(float, p.probs), float(p.tail_mass_bound)] for t, p in zip(cfg.grid, pmfs)]
    return Artifact(["t", *(f"p{m}" for m in range(m_max + 1)), "truncated_mass"], rows)


def _run_check(cfg: RunConfig) -> Artifact:
    spec, x = cfg.spec, cfg.extra
    if spec.family in ("FPPk", "FPAk"):
        g = _generator(cfg)
        if x["source"] == "series":
            pmfs = [pmf_fppk(spec.k, spec.lam, spec.alpha, float(t), x["m_max"]) for t in cfg.grid]
        else:
            pmfs = solve_fractional_master(g, cfg.grid)
        rep = _residual_homogeneous(g, pmf_curves(pmfs, cfg.grid), None)
    else:
        rep = residual_nonhomogeneous(
            spec.family,
            spec.k,
            spec.rate,
            spec.alpha,
            cfg.grid,
            x["m_max"],
            rho=spec.rho,
            v=x["v"],
            t_min=x["t_min"],
            report=True,
        )
    rows = [[m, float(r)] for m, r in enumerate(rep.per_m)]
    summary = {"max_residual": rep.max_residual, "argmax_m": int(rep.argmax[0]), "argmax_t": float(rep.argmax[1])}
    if rep.u_cutoff is not None:
        summary["quadrature_cutoff"] = float(rep.u_cutoff)
    return Artifact(["m", "max_residual"], rows, summary)


_RUNNERS = {
    "simulate": _run_simulate,
    "pmf": _run_pmf,
    "moments": _run_moments,
    "cov": _run_cov,
    "lrd": _run_lrd,
    "solve": _run_solve,
    "check-governing": _run_check,
}


# ---------------------------------------------------------------------------
# output


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    return x


def header(cfg: RunConfig) -> dict:
    h = {"tool": f"fcount {__version__}", "command": cfg.command}
    if cfg.spec is not None:
        h.update(cfg.spec.as_dict())
    else:
        h.update({k: v for k, v in cfg.params.items() if v is not None})
    if cfg.seed is not None:
        h["seed"] = cfg.seed
    if cfg.n_paths is not None:
        h["n_paths"] = cfg.n_paths
    if cfg.grid is not None:
        h["grid"] = {"start": float(cfg.grid[0]), "end": float(cfg.grid[-1]), "n_points": int(cfg.grid.size)}
    for key, val in cfg.extra.items():
        if val is not None and val != {}:
            h[key] = val
    if cfg.timestamp:
        h["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return h


def render(cfg: RunConfig, art: Artifact) -> str:
    head = header(cfg)
    if cfg.fmt == "json":
        doc = {"header": head, "summary": art.summary, "columns": art.columns, "data": art.rows}
        return json.dumps(_jsonable(doc), indent=1) + "\n"
    buf = io.StringIO()
    for key, val in head.items():
        buf.write(f"# {key}: {json.dumps(_jsonable(val))}\n")
    for key, val in art.summary.items():
        buf.write(f"# summary.{key}: {json.dumps(_jsonable(val))}\n")
    buf.write(",".join(art.columns) + "\n")
    for row in art.rows:
        buf.write(",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def run(cfg: RunConfig) -> int:
    """Execute one configured command and write its artifact; returns the exit status."""
    text = render(cfg, _RUNNERS[cfg.command](cfg))
    if cfg.output:
        with open(cfg.output, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        parser.exit(2, f"{parser.prog} {args.command}: error: {exc}\n")
    try:
        return run(cfg)
    except FcountError as exc:
        print(f"fcount: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
