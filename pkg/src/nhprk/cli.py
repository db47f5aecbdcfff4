"""Command-line front end.

Subcommands: tableau, simulate, converge, ensemble.  Exit codes: 0 on
success, 2 for configuration problems, 3 for solver failures.
"""

import argparse
import json
import sys as _sys

import numpy as np

from .errors import ConfigError, NhprkError, StepFailureError
from .harness import converge, ensemble, parse_config, simulate
from .tableau import lobatto_pair


def _fmt(x):
    return f"{float(x):.16e}"


def _tableau_csv(pair, stream):
    items = [
        ("a", pair.primal.a), ("b", pair.primal.b), ("c", pair.primal.c),
        ("a_hat", pair.dual.a), ("b_hat", pair.dual.b),
    ]
    for name, arr in items:
        stream.write(f"# {name}\n")
        stream.write("i,j,value\n")
        arr = np.atleast_2d(arr)
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                if arr.shape[0] == 1:
                    stream.write(f"{j},0,{_fmt(arr[i, j])}\n")
                else:
                    stream.write(f"{i},{j},{_fmt(arr[i, j])}\n")
    cert = pair.cert
    stream.write("# certificate\n")
    stream.write("name,value\n")
    for key in ("p", "q", "r", "p_hat", "q_hat", "r_hat", "cc", "dd",
                "cc_hat", "dd_hat", "r_inf"):
        stream.write(f"{key},{_fmt(getattr(cert, key))}\n")


def _tableau_json(pair):
    cert = pair.cert
    return {
        "s": pair.s,
        "a": pair.primal.a.tolist(),
        "b": pair.primal.b.tolist(),
        "c": pair.primal.c.tolist(),
        "a_hat": pair.dual.a.tolist(),
        "b_hat": pair.dual.b.tolist(),
        "certificate": {
            "p": cert.p, "q": cert.q, "r": cert.r,
            "p_hat": cert.p_hat, "q_hat": cert.q_hat, "r_hat": cert.r_hat,
            "cc": cert.cc, "dd": cert.dd,
            "cc_hat": cert.cc_hat, "dd_hat": cert.dd_hat,
            "r_inf": cert.r_inf,
        },
    }


def _tableau_text(pair, stream):
    np.set_printoptions(precision=12, suppress=False, linewidth=120)
    stream.write(f"stages: {pair.s}\n")
    stream.write(f"c:     {pair.primal.c}\n")
    stream.write(f"b:     {pair.primal.b}\na:\n{pair.primal.a}\n")
    stream.write(f"b_hat: {pair.dual.b}\na_hat:\n{pair.dual.a}\n")
    stream.write(f"certificate: {pair.cert}\n")


def _cmd_tableau(args):
    if args.family != "lobatto":
        raise ConfigError(f"unknown tableau family {args.family!r}")
    pair = lobatto_pair(args.stages)
    if args.out:
        out = open(args.out, "w", encoding="utf-8", newline="\n")
    else:
        out = _sys.stdout
    try:
        if args.json:
            json.dump(_tableau_json(pair), out, indent=2)
            out.write("\n")
        elif args.csv:
            _tableau_csv(pair, out)
        else:
            _tableau_text(pair, out)
    finally:
        if args.out:
            out.close()
    return 0


def _load_config(args):
    overrides = []
    for item in args.override or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides.append((key, value))
    cfg = parse_config(args.config, overrides)
    if args.out:
        cfg.out = args.out
    return cfg


def _cmd_simulate(args):
    record = simulate(_load_config(args))
    if not args.quiet:
        print(f"wrote {record.rows.shape[0]} rows")
    return 0


def _cmd_converge(args):
    report = converge(_load_config(args))
    if not args.quiet:
        print(f"slopes: q={report.slope_q:.3f} p={report.slope_p:.3f} "
              f"lambda={report.slope_lam:.3f} "
              f"(predicted {report.pred_q}/{report.pred_p}/{report.pred_lam})")
    return 0


def _cmd_ensemble(args):
    result = ensemble(_load_config(args))
    if not args.quiet:
        print(f"{result.rows.shape[0]} rows, {result.n_failed} failed members")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nhprk",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_tab = sub.add_parser("tableau", help="print a coefficient pair and its certificate")
    p_tab.add_argument("--family", default="lobatto")
    p_tab.add_argument("--stages", type=int, required=True)
    group = p_tab.add_mutually_exclusive_group()
    group.add_argument("--json", action="store_true")
    group.add_argument("--csv", action="store_true")
    p_tab.add_argument("--out", default="")
    p_tab.set_defaults(func=_cmd_tableau)

    for name, func, help_text in (
            ("simulate", _cmd_simulate, "advance one trajectory, emit per-step CSV"),
            ("converge", _cmd_converge, "global-error study against a refined reference"),
            ("ensemble", _cmd_ensemble, "energy-spread ensemble run")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="")
        p.add_argument("--override", action="append", metavar="KEY=VALUE")
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except StepFailureError as exc:
        suffix = f" (step {exc.step_index})" if exc.step_index is not None else ""
        print(f"solver failure: {exc}{suffix}", file=_sys.stderr)
        return 3
    except NhprkError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
