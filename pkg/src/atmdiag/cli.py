"""Command-line front end.

Exit codes: 0 success, 2 usage or parameter error, 3 data or file error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .atm import AtmConfig, FamilyKind, InnovationFamily, simulate
from .data import (
    TransportMode,
    analyze,
    atomic_write,
    build_distribution_series,
    ingest_csv,
    load_series,
    render_curves,
    render_series,
    rolling_forecast,
)
from .diagnostics import mcleod_tests, split_tests
from .errors import AtmError, ParamError
from .estimation import fit_alpha
from .montecarlo import StudyKind, StudySpec, run_study
from .streams import child_rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    try:
        return tuple(tuple(float(v) for v in p.split(":")) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected pairs like 0.5:0.2,0.2:0.1, got {text!r}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--grid-m", type=int, default=d(1000), help="grid intervals (default 1000)")
    parser.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    parser.add_argument("--out", default=d(None), help="output path (default stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=d("json"),
                        help="output format (default json)")


def _panel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="long-format CSV panel")
    p.add_argument("--period-column", default="period")
    p.add_argument("--value-column", default="value")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--padding", type=float, default=0.01, help="hull padding as a share of the range")
    p.add_argument("--transport-mode", choices=[m.value for m in TransportMode],
                   default=TransportMode.BARYCENTRIC.value)


def _study_flags(p: argparse.ArgumentParser, pairs: bool) -> None:
    p.add_argument("--config", help="study config file; flags below are ignored when given")
    if pairs:
        p.add_argument("--pairs", type=_pairs, default=((0.5, 0.2), (0.2, 0.1)),
                       help="coefficient pairs a1:a2, comma-separated")
    else:
        p.add_argument("--alphas", type=_floats, default=(-0.4, -0.2, 0.2, 0.5))
    p.add_argument("--ns", type=_ints, default=(100, 200, 400))
    p.add_argument("--ks", type=_ints, default=(3, 6, 9))
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--family", choices=[f.value for f in FamilyKind], default="trig")
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atmdiag",
                                     description="Autoregressive transport models: simulation, "
                                                 "estimation, residual diagnostics and studies.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate an ATM(p) series")
    p.add_argument("--alpha", type=_floats, required=True, help="coefficients a1[,a2,...]")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", choices=[f.value for f in FamilyKind], default="trig")
    p.add_argument("--burn-in", type=int, default=200)

    p = sub.add_parser("fit", parents=[common], help="fit ATM(1) to a series file")
    p.add_argument("--series", required=True)

    p = sub.add_parser("diagnose", parents=[common], help="portmanteau tests on a series file")
    p.add_argument("--series", required=True)
    p.add_argument("--ks", type=_ints, default=(3, 6, 9))
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--test", choices=("mcleod", "split", "both"), default="both")
    p.add_argument("--f-n", type=int, default=None, help="split: maps used for the fit")
    p.add_argument("--l-n", type=int, default=None, help="split: maps used for residuals")

    p = sub.add_parser("mc-size", parents=[common], help="size study under ATM(1)")
    _study_flags(p, pairs=False)
    p = sub.add_parser("mc-power", parents=[common], help="power study under ATM(2)")
    _study_flags(p, pairs=True)

    p = sub.add_parser("validate-condition", parents=[common],
                       help="numerical check of M2 = -M1 E[m^2]")
    p.add_argument("--config")
    p.add_argument("--alphas", type=_floats, default=(-0.4, -0.2, 0.2, 0.5))
    p.add_argument("--family", choices=[f.value for f in FamilyKind], default="trig")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--K", type=int, default=12)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("analyze", parents=[common], help="fit and test a data panel")
    _panel_flags(p)
    p.add_argument("--ks", type=_ints, default=(3, 6, 9))
    p.add_argument("--beta", type=float, default=0.05)

    p = sub.add_parser("forecast", parents=[common], help="rolling one-step forecasts of a panel")
    _panel_flags(p)
    p.add_argument("--train-len", type=int, required=True)
    p.add_argument("--start", type=int, default=None, help="first target period index (0-based)")
    p.add_argument("--end", type=int, default=None, help="one past the last target index")

    p = sub.add_parser("export", parents=[common], help="plot-ready curves from a panel")
    _panel_flags(p)
    p.add_argument("--what", choices=("quantiles", "transports", "barycenter", "acf"),
                   default="quantiles")
    p.add_argument("--K", type=int, default=9, help="lags for --what acf")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _dump(obj, args) -> str:
    if args.format == "json":
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"
    rows = obj if isinstance(obj, list) else [obj]
    keys = list(rows[0].keys()) if rows else []
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(_cell(r[k]) for k in keys))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return '"' + " ".join(_cell(x) for x in v) + '"'
    s = str(v)
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _cmd_simulate(args) -> None:
    family = InnovationFamily(FamilyKind(args.family))
    cfg = AtmConfig(args.alpha, args.n, family, args.burn_in, seed=args.seed, m=args.grid_m)
    rng = child_rng(args.seed, ("simulate", args.alpha, args.n, args.family, args.grid_m))
    series = simulate(cfg, rng)
    meta = {"alpha": list(args.alpha), "family": args.family, "seed": args.seed,
            "burn_in": args.burn_in}
    _emit(render_series(series, args.format, meta), args.out)


def _cmd_fit(args) -> None:
    fit = fit_alpha(load_series(args.series).series)
    _emit(_dump(fit.to_dict(), args), args.out)


def _report_rows(kind: str, reports: dict, beta: float) -> list[dict]:
    rows = []
    for k, r in reports.items():
        if isinstance(r, AtmError):
            rows.append({"test": kind, "K": k, "error": str(r)})
        else:
            d = r.to_dict()
            d["test"] = kind
            d["rejects"] = r.rejects(beta)
            rows.append(d)
    return rows


def _cmd_diagnose(args) -> None:
    series = load_series(args.series).series
    rows = []
    if args.test in ("mcleod", "both"):
        rows += _report_rows("mcleod", mcleod_tests(series, args.ks), args.beta)
    if args.test in ("split", "both"):
        rows += _report_rows("split", split_tests(series, args.ks, args.f_n, args.l_n,
                                                  components=False), args.beta)
    if args.format == "csv":
        keys = ["test", "K", "statistic", "dof", "p_value", "rejects", "f_n", "l_n", "alpha", "error"]
        rows = [{k: r.get(k, "") for k in keys} for r in rows]
    _emit(_dump(rows, args), args.out)


def _study_spec(args, kind: StudyKind) -> StudySpec:
    if args.config:
        return StudySpec.load(args.config)
    family = InnovationFamily(FamilyKind(args.family))
    if kind is StudyKind.CONDITION:
        return StudySpec(kind, args.alphas, (args.n,), (args.K,), args.reps, family=family,
                         master_seed=args.seed, grid_m=args.grid_m, burn_in=args.burn_in)
    params = args.pairs if kind is StudyKind.POWER else args.alphas
    return StudySpec(kind, params, args.ns, args.ks, args.reps, args.beta, family,
                     args.seed, args.grid_m, args.burn_in)


def _cmd_study(args, kind: StudyKind) -> None:
    spec = _study_spec(args, kind)
    if spec.kind is not kind:
        raise ParamError(f"config describes a {spec.kind.value} study, not {kind.value}")
    table = run_study(spec, args.workers)
    _emit(table.to_csv() if args.format == "csv" else table.to_json() + "\n", args.out)
    if args.out:
        print(table.render_text())


def _series_from_panel(args):
    panel = ingest_csv(args.input, args.period_column, args.value_column, args.delimiter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = build_distribution_series(panel, args.grid_m, args.padding, args.transport_mode)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return ds


def _cmd_analyze(args) -> None:
    ds = _series_from_panel(args)
    report = analyze(ds, args.ks, args.beta)
    if args.format == "json":
        d = report.to_dict()
        d["periods"] = list(ds.periods)
        d["omega"] = [ds.omega.lo, ds.omega.hi]
        text = json.dumps(d, indent=2, sort_keys=True) + "\n"
    else:
        rows = _report_rows("mcleod", report.mcleod, args.beta)
        rows += _report_rows("split", report.split, args.beta)
        keys = ["test", "K", "statistic", "dof", "p_value", "rejects", "alpha", "error"]
        text = _dump([{k: r.get(k, "") for k in keys} for r in rows], args)
    _emit(text, args.out)
    print(report.summary(), file=sys.stderr)


def _cmd_forecast(args) -> None:
    ds = _series_from_panel(args)
    result = rolling_forecast(ds, args.train_len, args.start, args.end)
    d = result.to_dict()
    _emit(_dump(d if args.format == "json" else d["records"], args), args.out)
    print(f"average Wasserstein error {result.average_error:.6g} "
          f"(barycenter forecast {result.baseline_average_error:.6g})", file=sys.stderr)


def _cmd_export(args) -> None:
    ds = _series_from_panel(args)
    if args.what == "quantiles":
        objs = dict(zip(ds.periods, ds.quantiles))
    elif args.what == "transports":
        labels = ds.periods if len(ds.periods) == ds.n else ds.periods[1:]
        objs = dict(zip(labels, ds.transports.maps))
    elif args.what == "barycenter":
        objs = {"barycenter": ds.barycenter_q}
    else:
        report = analyze(ds, [args.K])
        objs = {f"split_K{args.K}": report.split[args.K]}
        mc = report.mcleod[args.K]
        if not isinstance(mc, AtmError):
            objs[f"mcleod_K{args.K}"] = mc
    _emit(render_curves(objs, args.format), args.out)


COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "diagnose": _cmd_diagnose,
    "mc-size": lambda a: _cmd_study(a, StudyKind.SIZE),
    "mc-power": lambda a: _cmd_study(a, StudyKind.POWER),
    "validate-condition": lambda a: _cmd_study(a, StudyKind.CONDITION),
    "analyze": _cmd_analyze,
    "forecast": _cmd_forecast,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except AtmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC) else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
