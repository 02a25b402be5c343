"""Command-line entry point: theory curves, simulations, zero statistics and comparisons.

Every artifact starts with a ``# config: {...}`` line holding the fully
resolved configuration.  Settings come from built-in defaults, then an
optional ``--config`` file of ``key = value`` lines, then command-line flags.

Exit status: 0 on success, 1 when a requested tolerance is not met, 2 for
invalid configuration, 3 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import ensembles, painleve, spacings, zeros
from .errors import (
    DataError,
    EvaluationFailure,
    IntegrationError,
    InvalidArgument,
    NonConvergence,
    SamplingError,
    SingularOperator,
)

COMMANDS = ("theory", "simulate", "zeros", "compare")
ROUTES = ("operator", "painleve", "both")
RESCALINGS = ("none", "exterior", "interior")
BETA_ENSEMBLE = {1: "COE", 2: "CUE", 4: "CSE"}
COMPUTE_ERRORS = (EvaluationFailure, IntegrationError, NonConvergence, SamplingError, SingularOperator)


class ConfigError(Exception):
    pass


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _ensemble(text: str) -> str:
    e = text.upper()
    if e not in spacings.ENSEMBLES:
        raise argparse.ArgumentTypeError(f"ensemble must be one of {', '.join(spacings.ENSEMBLES)}")
    return e


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="circspace", description=__doc__.split("\n")[0])
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="output path")

    th = sub.add_parser("theory", help="tabulate p and r on a grid")
    common(th)
    th.add_argument("--ensemble", type=_ensemble, default="CUE")
    th.add_argument("--statistic", default="kth:0")
    th.add_argument("--xi", type=float, default=1.0)
    th.add_argument("--s-max", type=float, default=3.0)
    th.add_argument("--step", type=float, default=0.01)
    th.add_argument("--route", choices=ROUTES, default="operator")
    th.add_argument("--rescaling", choices=RESCALINGS, default="none")
    th.add_argument("--height", type=float, help="Riemann height E for rescaled curves")
    th.add_argument("--tol", type=float, default=spacings.CURVE_TOL, help="operator-route tolerance")
    th.add_argument("--agree-tol", type=float, default=1e-6, help="required agreement of the two routes")

    si = sub.add_parser("simulate", help="Monte Carlo histogram of a statistic")
    common(si)
    si.add_argument("--beta", type=int, choices=ensembles.BETAS, default=2)
    si.add_argument("--N", type=int, default=20)
    si.add_argument("--M", type=int, default=1_000_000)
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--statistic", default="kth:0")
    si.add_argument("--xi", type=float, default=1.0)
    si.add_argument("--bin-width", type=float, default=0.01)
    si.add_argument("--s-max", type=float, default=3.0)
    si.add_argument("--threads", "--workers", dest="threads", type=int, default=1)
    si.add_argument("--chunk", type=int, default=ensembles.DEFAULT_CHUNK)
    si.add_argument("--origins", type=int, default=1000, help="random origins per sample")
    si.add_argument("--sampler", choices=("cmv", "haar"), default="cmv")

    ze = sub.add_parser("zeros", help="histogram of a statistic of Riemann zeros")
    common(ze)
    ze.add_argument("--input", required=False)
    ze.add_argument("--format", choices=zeros.FORMATS, default="plain_decimal")
    ze.add_argument("--mode", choices=zeros.UNFOLD_MODES, default="constant_density")
    ze.add_argument("--margin", type=float, default=zeros.DEFAULT_MARGIN)
    ze.add_argument("--statistic", default="kth:0")
    ze.add_argument("--xi", type=float, default=1.0)
    ze.add_argument("--seed", type=int, default=0)
    ze.add_argument("--bin-width", type=float, default=0.01)
    ze.add_argument("--s-max", type=float, default=3.0)

    co = sub.add_parser("compare", help="residuals of a histogram against theory")
    common(co)
    co.add_argument("--histogram", required=False)
    co.add_argument("--ensemble", type=_ensemble)
    co.add_argument("--statistic")
    co.add_argument("--xi", type=float)
    co.add_argument("--N", type=float, help="dimension scaling the residuals (N_eff for zeros)")
    co.add_argument("--height", type=float, help="Riemann height E for the rescaled columns")
    co.add_argument("--rebin", type=int, default=1)
    co.add_argument("--s-min-fit", type=float, default=0.0)
    co.add_argument("--s-max-fit", type=float, default=math.inf)
    co.add_argument("--min-correlation", type=float)
    co.add_argument("--chi2-level", type=float, help="fail if the chi-square p-value is below this")
    return top


def parse_args(argv=None) -> argparse.Namespace:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _resolved(args) -> dict:
    """Settings that determine an artifact's content (paths excluded)."""
    skip = {"out", "config"}
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and not (isinstance(v, float) and math.isinf(v))}


# --------------------------------------------------------------------------
# Commands


def _validate_theory(args):
    kind, _ = spacings._parse_statistic(args.statistic)
    if args.route != "operator" and kind == "nn":
        raise InvalidArgument("the nearest-neighbour statistic has no Painleve route")
    if args.route != "operator" and args.ensemble != "CUE" and args.statistic != "kth:0":
        raise InvalidArgument("the Painleve route covers kth:0 only for COE and CSE")
    if args.route != "operator" and args.statistic not in ("kth:0", "origin"):
        raise InvalidArgument("the Painleve route covers kth:0 and origin only")
    if args.rescaling != "none":
        if args.ensemble != "CUE":
            raise InvalidArgument("rescaling applies to CUE curves compared with Riemann zeros")
        if args.height is None:
            raise InvalidArgument("rescaling needs --height")
        if args.rescaling == "interior" and args.route != "operator":
            raise InvalidArgument("interior rescaling is available on the operator route only")


def cmd_theory(args) -> int:
    _validate_theory(args)
    grid = spacings.default_grid(args.s_max, args.step)
    resc = spacings.Rescaling.for_height(args.rescaling, args.height) if args.rescaling != "none" else spacings.Rescaling()
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cfg = _resolved(args)
    curves = {}
    if args.route in ("operator", "both"):
        curves["operator"] = spacings.spacing_curve(args.statistic, args.ensemble, args.xi, grid, resc, tol=args.tol)
    if args.route in ("painleve", "both"):
        curves["painleve"] = painleve.painleve_spacing(args.ensemble, "both", args.xi, grid, args.statistic, resc)
    for name, c in curves.items():
        c.to_csv(out / f"theory_{name}.csv", header={**cfg, "route_used": name, **c.metadata()})
    status = 0
    if len(curves) == 2:
        a, b = curves["operator"], curves["painleve"]
        dp, dr = float(np.max(np.abs(a.p - b.p))), float(np.max(np.abs(a.r - b.r)))
        print(f"route agreement: max|dp| = {dp:.3e}, max|dr| = {dr:.3e}")
        if max(dp, dr) > args.agree_tol:
            print(f"routes differ by more than {args.agree_tol:g}", file=sys.stderr)
            status = 1
    return status


def cmd_simulate(args) -> int:
    h = ensembles.simulate(
        args.beta, args.N, args.M, args.statistic, args.seed, args.xi, args.bin_width, args.s_max,
        workers=args.threads, chunk=args.chunk, origins_per_sample=args.origins, sampler=args.sampler,
    )
    cfg = _resolved(args)
    cfg.pop("threads")  # results do not depend on it
    h.to_csv(args.out or "simulate.csv", header={**cfg, "ensemble": BETA_ENSEMBLE[args.beta]})
    return 0


def cmd_zeros(args) -> int:
    if not args.input:
        raise InvalidArgument("zeros needs --input")
    ds = zeros.parse_zeros(args.input, args.format)
    seq = zeros.unfold(ds, args.mode)
    rng = ensembles.stream(args.seed)
    h = zeros.zero_statistics(seq, args.statistic, args.xi, rng, args.bin_width, args.s_max, args.margin)
    cfg = {**_resolved(args), "ensemble": "CUE", "N": seq.N_eff, "height": seq.window_mid_height,
           "zeros": len(ds)}
    h.to_csv(args.out or "zeros.csv", header=cfg)
    return 0


def _from_header(value, cfg, key, default=None):
    return value if value is not None else cfg.get(key, default)


def cmd_compare(args) -> int:
    from scipy.stats import chi2 as chi2_dist

    if not args.histogram:
        raise InvalidArgument("compare needs --histogram")
    h = ensembles.Histogram.from_csv(args.histogram)
    cfg = h.meta
    ensemble = _ensemble(_from_header(args.ensemble, cfg, "ensemble", "CUE"))
    statistic = _from_header(args.statistic, cfg, "statistic", "kth:0")
    xi = float(_from_header(args.xi, cfg, "xi", 1.0))
    N = _from_header(args.N, cfg, "N")
    if N is None:
        raise InvalidArgument("compare needs --N (not found in the histogram header)")
    N = float(N)
    height = _from_header(args.height, cfg, "height")
    if args.rebin > 1:
        h = h.rebinned(args.rebin)
    grid = spacings.default_grid(h.s_max, h.bin_width / max(1, round(h.bin_width / 0.01)))
    base = spacings.spacing_curve(statistic, ensemble, xi, grid)
    rep = ensembles.compare(h, base, N, (args.s_min_fit, args.s_max_fit))
    columns = {"r_none": rep.reference_r}
    for mode in ("interior", "exterior"):
        if height is not None and ensemble == "CUE":
            c = spacings.spacing_curve(statistic, ensemble, xi, grid, spacings.Rescaling.for_height(mode, float(height)))
            columns[f"r_{mode}"] = ensembles.compare(h, c, N, (args.s_min_fit, args.s_max_fit)).reference_r
        else:
            columns[f"r_{mode}"] = np.full(len(rep.centers), np.nan)

    out = Path(args.out or "compare")
    resolved = {**_resolved(args), "ensemble": ensemble, "statistic": statistic, "xi": xi, "N": N,
                "height": height, "histogram_config": cfg}
    pval = float(chi2_dist.sf(rep.chi_square, rep.dof)) if rep.dof else math.nan
    report = {"config": resolved, "chi_square": rep.chi_square, "dof": rep.dof, "chi_square_pvalue": pval,
              "sup_norm": rep.sup_norm, "correlation": rep.correlation,
              "s": rep.centers.tolist(), "residuals": rep.residuals.tolist(),
              "scaled_residuals": rep.scaled_residuals.tolist(), "reference_r": rep.reference_r.tolist()}
    with open(out.with_suffix(".json"), "w") as fh:
        json.dump(report, fh, indent=1, default=str)
    with open(out.parent / (out.name + "_residuals.csv"), "w", newline="") as fh:
        fh.write("# config: " + json.dumps(resolved, sort_keys=True, default=str) + "\n")
        w = csv.writer(fh)
        w.writerow(["s", "scaled_residual", "r_interior", "r_exterior", "r_none"])
        for row in zip(rep.centers, rep.scaled_residuals, columns["r_interior"], columns["r_exterior"], columns["r_none"]):
            w.writerow([repr(float(v)) for v in row])
    print(f"chi2 = {rep.chi_square:.2f} on {rep.dof} bins (p = {pval:.3g}); correlation = {rep.correlation}")

    status = 0
    if args.min_correlation is not None and (rep.correlation is None or rep.correlation < args.min_correlation):
        status = 1
    if args.chi2_level is not None and not pval >= args.chi2_level:
        status = 1
    return status


HANDLERS = {"theory": cmd_theory, "simulate": cmd_simulate, "zeros": cmd_zeros, "compare": cmd_compare}


def run(args: argparse.Namespace) -> int:
    try:
        return HANDLERS[args.command](args)
    except (InvalidArgument, DataError, ConfigError) as exc:
        print(f"circspace {args.command}: {exc}", file=sys.stderr)
        return 2
    except COMPUTE_ERRORS as exc:
        print(f"circspace {args.command}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (ConfigError, OSError) as exc:
        print(f"circspace: {exc}", file=sys.stderr)
        return 2
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
