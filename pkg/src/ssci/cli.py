"""Command-line interface: ``ssci <subcommand> [flags]``.

Exit status 0 on success, 2 for invalid input, 3 when a numerical solver
fails.  Outputs echo the full run configuration so each file can be
regenerated from its own header.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ci import EstimateBundle, ci_from_estimates, resolve_method
from .critval import InfeasibleError, Level, SolverError, solve_c_one_sided, solve_cu_optimal
from .gauss import DomainError, McConfig, TildeOmega, _check_s_bar
from .regress import CSVParseError, RegressionSpec, factorial_design, ingest_csv, ols_fit
from .surface import SurfaceNotAvailable, builtin_surface, default_grids, dump_surface, eval_surface, fit_surface

EXIT_INPUT = 2
EXIT_SOLVER = 3


class UsageError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class RunConfig:
    subcommand: str
    alpha: float
    gamma: float
    method: str | None
    seed: int | None
    draws: int | None
    inputs: dict
    outputs: str | None

    @property
    def level(self) -> Level:
        return Level(self.alpha, self.gamma)

    def mc(self, default_draws: int) -> McConfig:
        return McConfig(draws=self.draws or default_draws, seed=self.seed or 0)

    def header(self) -> dict:
        out = {"ssci_version": __version__, "subcommand": self.subcommand, "alpha": self.alpha,
               "gamma": self.gamma}
        for key in ("method", "seed", "draws"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        out.update({k: v for k, v in self.inputs.items() if v is not None})
        return out


def _config(args, **inputs) -> RunConfig:
    level = Level(args.alpha, args.gamma)
    return RunConfig(args.command, level.alpha, level.gamma, getattr(args, "method", None),
                     getattr(args, "seed", None), getattr(args, "draws", None), inputs,
                     getattr(args, "out", None))


def _require_seed(args, why: str):
    if args.seed is None:
        raise UsageError(f"--seed is required for {why}")


def _emit(text: str, out: str | None) -> None:
    if out:
        path = Path(out)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        tmp.replace(path)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out):
    _emit(json.dumps(obj, indent=2) + "\n", out)


def _emit_csv(writer, cfg: RunConfig, out):
    """``writer(path)`` writes a CSV; prepend the run configuration."""
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "out.csv"
        writer(p)
        body = p.read_text()
    head = "".join(f"# run.{k} = {v}\n" for k, v in cfg.header().items())
    _emit(head + body, out)


# ---------------------------------------------------------------------------
# subcommands


def _method_flag(args) -> str:
    return {"exact": "exact_mc"}.get(args.method, args.method)


def cmd_ci(args) -> int:
    method = _method_flag(args)
    level = Level(args.alpha, args.gamma)
    if resolve_method(method, level) == "exact_mc":
        _require_seed(args, "exact Monte Carlo critical values")
    if args.estimates:
        bundle = EstimateBundle.from_dict(json.loads(Path(args.estimates).read_text()))
    elif args.data:
        if not (args.target and args.interest):
            raise UsageError("--data needs --target and --interest")
        data = ingest_csv(args.data, args.schema)
        if args.factorial:
            data = factorial_design(data, args.factorial)
        spec = RegressionSpec(args.target, args.interest, tuple(args.restricted), tuple(args.unrestricted))
        bundle = ols_fit(data, spec, args.cov_type).bundle()
    else:
        raise UsageError("provide --estimates or --data")
    cfg = _config(args, estimates=args.estimates, data=args.data, side=args.side)
    iv = ci_from_estimates(bundle, level, args.side, method, cfg.mc(2_000_000))
    record = iv.to_dict()
    record["estimates"] = bundle.to_dict()
    record["config"] = cfg.header()
    _emit_json(record, args.out)
    return 0


def cmd_critval(args) -> int:
    level = Level(args.alpha, args.gamma)
    two = any(v is not None for v in (args.omega12, args.omega13, args.omega23))
    if two == (args.omega is not None):
        raise UsageError("give either --omega or --omega12/--omega13 [--omega23]")
    method = "exact_mc" if args.exact else "surface" if args.surface else resolve_method("auto", level)
    if method == "exact_mc":
        _require_seed(args, "--exact")
    args.method = method
    cfg = _config(args, omega=args.omega, omega12=args.omega12, omega13=args.omega13, omega23=args.omega23)
    mc = cfg.mc(2_000_000)
    rec = {"schema_version": 1, "kind": "critical_value", "method": method}
    if not two:
        omega = float(args.omega)
        if not 0 <= omega < 1:
            raise DomainError("--omega must lie in [0, 1)")
        if method == "surface":
            rec |= {"c": eval_surface(builtin_surface(level, "c_one_sided"), omega)}
        else:
            c, info = solve_c_one_sided(level, omega, mc, full_output=True)
            rec |= {"c": c, "se": info["c_se"]}
    else:
        tw = _check_s_bar(TildeOmega(args.omega12 or 0.0, args.omega13 or 0.0, args.omega23 or 0.0))
        if method == "surface":
            s = builtin_surface(level, "c_u_two_sided")
            rec |= {"c_lower": eval_surface(s, (tw.w13, tw.w12)), "c_upper": eval_surface(s, (tw.w12, tw.w13))}
        else:
            pair = solve_cu_optimal(level, tw, mc)
            rec |= pair.to_dict()
        rec["trunc"] = level.trunc
    rec["config"] = cfg.header()
    _emit_json(rec, args.out)
    return 0


def cmd_surface_fit(args) -> int:
    from .studies import _pmap

    _require_seed(args, "surface fitting")
    if not args.out:
        raise UsageError("surface-fit needs --out")
    level = Level(args.alpha, args.gamma)
    cfg = _config(args, side=args.side, step=args.step, points=args.points)
    mc = cfg.mc(500_000)
    if args.side == "one":
        grid = np.round(np.arange(0, 1, args.step or 0.01), 12)
        grid = grid[grid < 1]
        values = _pmap(lambda w: solve_c_one_sided(level, w, mc.derive("fit1", w)), grid)
        target = "c_one_sided"
    else:
        full = default_grids("c_u_two_sided")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(mc.seed)))
        grid = full[np.sort(rng.choice(len(full), size=min(args.points, len(full)), replace=False))]
        values = _pmap(lambda p: solve_cu_optimal(level, p, mc.derive("fit2", *p)).c_upper, grid)
        values = np.minimum(values, level.trunc + 6.0)
        target = "c_u_two_sided"
    surf, report = fit_surface(level, target, grid, values)
    dump_surface(surf, args.out)
    text = Path(args.out).read_text()
    head = "".join(f"# run.{k} = {v}\n" for k, v in cfg.header().items())
    head += f"# fit.r_squared = {report.r_squared!r}\n# fit.max_abs_residual = {report.max_abs_residual!r}\n"
    head += f"# fit.grid_size = {report.grid_size}\n"
    _emit(head + text, args.out)
    return 0


def cmd_simulate(args) -> int:
    from . import studies

    _require_seed(args, "simulation studies")
    level = Level(args.alpha, args.gamma)
    cfg = _config(args, figure=args.figure, step=args.step, omega=args.omega)
    mc = cfg.mc(500_000)
    if args.figure == "fig1":
        grid = np.round(np.arange(0, 1, args.step or 0.01), 12)
        res = studies.excess_length_curve_omega(level, grid[grid < 1], mc)
    elif args.figure == "fig2":
        res = studies.excess_length_curve_delta(level, args.omega, None, mc)
    else:
        step = args.step or 0.1
        axis = np.round(np.arange(step, 1, step), 12)
        pts = [(a, b) for a in axis for b in axis]
        res = studies.expected_length_surface(level, pts, mc, w23_fractions=tuple(args.w23_fractions))
    _emit_csv(res.to_csv, cfg, args.out)
    return 0


def cmd_coverage_scan(args) -> int:
    from . import studies

    level = Level(args.alpha, args.gamma)
    method = _method_flag(args)
    method = resolve_method(method, level)
    if method == "exact_mc":
        raise UsageError("coverage scans evaluate the surface approximation; use --method surface")
    args.method = method
    if args.seed is None:
        args.seed = 0
    cfg = _config(args, side=args.side, step=args.step)
    res = studies.coverage_scan(level, args.side, None, cfg.mc(1_000_000), method, args.step or 0.01,
                                tuple(args.w23_fractions))
    _emit_csv(res.to_csv, cfg, args.out)
    sys.stderr.write(f"minimum coverage {res.min:.5f} at {res.min_point}\n")
    return 0


def _parse_recenter(items):
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--recenter expects NAME=SHIFT or NAME=zero, got {item!r}")
        out[name.strip()] = "zero" if value.strip() == "zero" else float(value)
    return out


def cmd_bootstrap(args) -> int:
    from . import studies

    level = Level(args.alpha, args.gamma)
    method = resolve_method(_method_flag(args), level)
    if method == "exact_mc":
        _require_seed(args, "exact Monte Carlo critical values")
    args.method = method
    if args.seed is None:
        args.seed = 0
    data = ingest_csv(args.data, args.schema) if args.data else studies.load_synthetic_factorial()
    recenter = _parse_recenter(args.recenter)
    cfg = _config(args, data=args.data or "bundled:synthetic_factorial", reps=args.reps,
                  recenter=" ".join(args.recenter) or None, controls=" ".join(args.unrestricted) or None)
    res = studies.bootstrap_study(data, level, args.reps, recenter, cfg.mc(2_000_000), method,
                                  tuple(args.unrestricted), args.target or "y")
    _emit_csv(res.to_csv, cfg, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _fractions(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=0.05, help="nominal level alpha (default 0.05)")
    common.add_argument("--gamma", type=float, default=None, help="split gamma (default alpha/10)")
    common.add_argument("--seed", type=int, default=None, help="base seed for Monte Carlo draws")
    common.add_argument("--draws", type=int, default=None, help="Monte Carlo draws per solve")
    common.add_argument("--out", default=None, help="output file (default stdout)")

    method = argparse.ArgumentParser(add_help=False)
    method.add_argument("--method", choices=("auto", "surface", "exact"), default="auto",
                        help="critical values from tabulated surfaces or exact simulation")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=None, help="CSV file with a header row")
    data.add_argument("--schema", default=None,
                      help="required columns, e.g. 'y,T1:binary,T2:binary' (default: all)")
    data.add_argument("--target", default=None, help="outcome column")
    data.add_argument("--unrestricted", action="append", default=[], metavar="COL",
                      help="unrestricted control column (repeatable)")

    p = argparse.ArgumentParser(prog="ssci", description="Adaptive confidence intervals under sign restrictions.",
                                epilog="Exit status: 0 success, 2 invalid input, 3 solver failure.")
    p.add_argument("--version", action="version", version=f"ssci {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ci", parents=[common, method, data], help="interval for one coefficient")
    s.add_argument("--side", choices=("upper", "lower", "two"), default="two",
                   help="upper [b, inf), lower (-inf, b] or two-sided (default two)")
    s.add_argument("--estimates", default=None, help="JSON estimate bundle (b_hat, d_hat, sigma_hat, n)")
    s.add_argument("--interest", default=None, help="column whose coefficient gets the interval")
    s.add_argument("--restricted", action="append", default=[], metavar="COL",
                   help="column with a non-negative coefficient (repeatable)")
    s.add_argument("--factorial", choices=("interaction", "both"), default=None,
                   help="build T, C and I/B regressors from T1, T2 columns")
    s.add_argument("--cov-type", choices=("HC0", "HC1"), default="HC1",
                   help="robust covariance flavour (default HC1)")
    s.set_defaults(func=cmd_ci)

    s = sub.add_parser("critval", parents=[common], help="critical values")
    s.add_argument("--omega", type=float, default=None, help="one-sided omega")
    s.add_argument("--omega12", type=float, default=None, help="two-sided w12 (lower-arm subset)")
    s.add_argument("--omega13", type=float, default=None, help="two-sided w13 (upper-arm subset)")
    s.add_argument("--omega23", type=float, default=None, help="two-sided w23 (default 0)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="solve by Monte Carlo")
    g.add_argument("--surface", action="store_true", help="evaluate the tabulated surface")
    s.set_defaults(func=cmd_critval)

    s = sub.add_parser("surface-fit", parents=[common], help="fit a response surface to solved values")
    s.add_argument("--side", choices=("one", "two"), default="one", help="surface to fit (default one)")
    s.add_argument("--step", type=float, default=None, help="one-sided omega grid step (default 0.01)")
    s.add_argument("--points", type=int, default=200, help="two-sided grid subsample size")
    s.set_defaults(func=cmd_surface_fit)

    s = sub.add_parser("simulate", parents=[common], help="length curves and surfaces")
    s.add_argument("figure", choices=("fig1", "fig2", "fig3"))
    s.add_argument("--step", type=float, default=None, help="grid step (fig1 0.01, fig3 0.1)")
    s.add_argument("--omega", type=float, default=0.5, help="omega for fig2")
    s.add_argument("--w23-fractions", type=_fractions, default=[0.0],
                   help="fig3 w23 levels as fractions of the admissible half-width")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("coverage-scan", parents=[common, method], help="coverage over an omega grid")
    s.add_argument("--side", choices=("one", "two"), default="one", help="interval type (default one)")
    s.add_argument("--step", type=float, default=0.01, help="grid step (default 0.01)")
    s.add_argument("--w23-fractions", type=_fractions, default=[-0.9, 0.0, 0.9],
                   help="two-sided w23 levels as fractions of the admissible half-width")
    s.set_defaults(func=cmd_coverage_scan)

    s = sub.add_parser("bootstrap", parents=[common, method, data], help="bootstrap a 2x2 factorial regression")
    s.add_argument("--reps", type=int, default=2000, help="bootstrap replications, at least 100 (default 2000)")
    s.add_argument("--recenter", action="append", default=[], metavar="NAME=SHIFT",
                   help="shift a coefficient's truth and estimates; NAME=zero moves the truth to 0")
    s.set_defaults(func=cmd_bootstrap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        from .studies import worker_count

        worker_count()
        return args.func(args)
    except (InfeasibleError, SolverError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"ssci: solver failure: {exc}\n")
        return EXIT_SOLVER
    except (UsageError, DomainError, CSVParseError, SurfaceNotAvailable, ValueError, KeyError,
            OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"ssci: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
