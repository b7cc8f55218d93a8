"""Command-line interface: ``tubal <command> [--seed S] [--config FILE] [--out DIR]``.

Exit codes: 0 success, 1 selftest failure, 2 usage, 3 validation, 4 numerical.
"""

import argparse
import os
import sys

from .chart import emit_chart_svg
from .config import parse_assignments, parse_config
from .errors import (FormatError, NumericalFailure, ParseError, TubalError,
                     ValidationError)
from .experiments import alpha_trend, instance_for, rank_trend, run_experiment
from .selftest import run_selftest
from .storage import write_checkpoint, write_tensor

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4

COMMANDS = {
    "gen": "sample a ground truth and ensemble into tensor containers",
    "run": "run gradient descent and write trace.csv and chart.svg",
    "power": "compare gradient descent with the power method over the first window",
    "two-stage": "run the two-stage experiment and report the detected stages",
    "sweep-alpha": "sweep the initialization scale",
    "sweep-rank": "sweep the factor width R",
    "rip-check": "Monte-Carlo RIP deviation range",
    "stats": "random-tensor norm statistics",
    "selftest": "run the invariant suite",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser = argparse.ArgumentParser(prog="tubal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "rip-check":
            p.add_argument("--rank", type=int)
            p.add_argument("--trials", type=int)
        if name == "stats":
            p.add_argument("--trials", type=int)
        if name in ("sweep-alpha", "sweep-rank"):
            p.add_argument("--workers", type=int)
    return parser


def resolve_config(args):
    """Layer the config file, then ``--set`` items, then dedicated flags."""
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_assignments(fh.read()))
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"--set expects KEY=VALUE, got {item!r}")
        values.update(parse_assignments(f"{key} = {value}"))
    flags = {"seed": args.seed, "out": args.out, "rip_rank": getattr(args, "rank", None),
             "trials": getattr(args, "trials", None), "workers": getattr(args, "workers", None)}
    values.update({k: v for k, v in flags.items() if v is not None})
    cfg = parse_config("", values)
    defaults = [key for key, _ in cfg.items() if key not in values]
    return cfg, defaults


def print_config(cfg, defaults, out):
    for key, value in cfg.items():
        note = "  # default" if key in defaults else ""
        out(f"{key} = {value}{note}")


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _trace_chart(path, rows, title, power=False):
    ts = [r.t for r in rows]
    series = [("test_err", ts, [r.test_err for r in rows]),
              ("angle(L, L_t)", ts, [r.angle_L_Lt for r in rows]),
              ("angle(X, L_t)", ts, [r.angle_X_Lt for r in rows])]
    if power:
        series.append(("angle(L, power)", ts, [r.angle_L_Lpow for r in rows]))
    emit_chart_svg(path, series, title=title, xlabel="iteration t", ylabel="value")


def dispatch(cfg, command, out):
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, f"{command}.csv" if command != "run" else "trace.csv")
    chart_path = os.path.join(cfg.out, "chart.svg")
    if command == "gen":
        P = instance_for(cfg)
        write_tensor(os.path.join(cfg.out, "truth.tbl"), [P.X], cfg.seed)
        write_tensor(os.path.join(cfg.out, "ensemble.tbl"), list(P.ensemble.tensors), cfg.seed)
        out(f"wrote truth.tbl and ensemble.tbl ({cfg.m} sensing tensors) to {cfg.out}")
        return 0
    text, payload = run_experiment(cfg, command)
    _write(csv_path, text)
    if command == "run":
        _trace_chart(chart_path, payload.rows, "gradient descent")
        write_checkpoint(os.path.join(cfg.out, "final.tbl"), payload.state)
        final = payload.rows[-1]
        out(f"t={final.t} loss={final.loss:.6g} test_err={final.test_err:.6g}")
    elif command == "power":
        rows, report = payload
        _trace_chart(chart_path, rows, "power-method alignment", power=True)
        out(f"max angle gap {report.max_angle_gap:.6g} (band {report.band}, "
            f"margin {report.margin:.6g}); max power_gap {report.max_power_gap:.6g}; "
            f"verdict {'PASS' if report.passed else 'FAIL'}")
    elif command == "two-stage":
        rows, report = payload
        _trace_chart(chart_path, rows, "two-stage dynamics")
        knee = report.t_knee if report.determined else "undetermined"
        out(f"t_knee={knee} t_angle_min={report.t_angle_min} unimodal={report.unimodal} "
            f"early_min_err={report.early_min_err:.6g} final_err={report.final_err:.6g} "
            f"verdict {'PASS' if report.passed else 'FAIL'}")
    elif command in ("sweep-alpha", "sweep-rank"):
        agg = payload.aggregates()
        values = list(payload.values)
        if command == "sweep-alpha":
            trend = alpha_trend(payload)
            emit_chart_svg(chart_path, [("mean final test_err", values,
                                         [agg[v]["mean_test_err"] for v in values])],
                           title="final test error vs alpha", xlabel="alpha",
                           ylabel="test_err", logx=True, logy=True)
            slope = "undefined" if trend.slope is None else f"{trend.slope:.6g}"
            out(f"spearman={trend.spearman:.6g} slope={slope} "
                f"verdict {'PASS' if trend.passed else 'FAIL'}")
        else:
            trend = rank_trend(payload)
            emit_chart_svg(chart_path, [("mean iterations to tau", values,
                                         [agg[v]["mean_iters"] for v in values])],
                           title="iterations to threshold vs R", xlabel="R",
                           ylabel="iterations")
            out(f"mean_iters={trend.mean_iters} inversions={trend.inversions} "
                f"missing={trend.missing} verdict {'PASS' if trend.passed else 'FAIL'}")
    elif command == "rip-check":
        lo, hi = payload
        out(f"delta_lo={lo!r} delta_hi={hi!r}")
    elif command == "stats":
        out(f"trials={payload.trials} norm_event={payload.norm_event} "
            f"bracket_event={payload.bracket_event} sigma_min_event={payload.sigma_min_event}")
    out(f"wrote {csv_path}")
    return 0


def main(argv=None, out=print):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, defaults = resolve_config(args)
        print_config(cfg, defaults, out)
        if args.command == "selftest":
            return 1 if run_selftest(cfg.seed, out) else 0
        return dispatch(cfg, args.command, out)
    except (ParseError, ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TubalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry():
    sys.exit(main())
