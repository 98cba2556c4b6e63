"""Command-line entry point: ``gridco clear|train|benchmark|report``.

Exit codes: 0 success, 1 input or config error, 2 infeasible, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, load_config
from .dcopf import ClearingInfeasible, ClearingInput, clear_market
from .grid_model import CaseError, capacities, load_case

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("gridco")


def _fail(code, msg):
    print(f"gridco: {msg}", file=sys.stderr)
    return code


def read_bids(path, case):
    """Bids as a YAML list (case order) or a mapping of generator name to bid."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"bids file not found: {path}")
    doc = yaml.safe_load(p.read_text())
    if isinstance(doc, str):
        doc = [float(v) for v in doc.replace(",", " ").split()]
    if isinstance(doc, dict):
        names = [g.name for g in case.generators]
        unknown = set(doc) - set(names)
        if unknown:
            raise ValueError(f"bids file names unknown generators: {sorted(unknown)}")
        # generators left out bid their marginal cost
        return np.array([float(doc.get(g.name, g.marginal_cost)) for g in case.generators])
    if isinstance(doc, list):
        if len(doc) != case.n_gen:
            raise ValueError(f"bids file has {len(doc)} values, case has {case.n_gen} generators")
        return np.array([float(v) for v in doc])
    raise ValueError("bids file must hold a list or a name -> bid mapping")


def cmd_clear(args):
    try:
        case = load_case(args.case)
        bids = read_bids(args.bids, case)
        if not 0 <= args.t < case.horizon:
            raise ValueError(f"time step {args.t} outside 0..{case.horizon - 1}")
        design = None if args.design is None else [float(v) for v in args.design.split(",")]
        caps = capacities(case, design, args.mode, args.fixed_increment)
        inp = ClearingInput(bids, case.demand(args.t), caps, args.shed_penalty)
    except (CaseError, ValueError, OSError, yaml.YAMLError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    try:
        res = clear_market(case, inp)
    except ClearingInfeasible as exc:
        return _fail(EXIT_INFEASIBLE, f"infeasible: {exc}")
    except Exception as exc:  # solver failure
        return _fail(EXIT_RUNTIME, f"clearing failed: {exc}")
    rows = [
        ["dispatch", *res.dispatch],
        ["gen_price", *res.gen_price],
        ["lmp", *res.lmp],
        ["angle", *res.angles],
        ["flow", *res.flows],
        ["shed", *res.shed],
        ["operational_cost", res.operational_cost],
    ]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(fh)
        for r in rows:
            wr.writerow([r[0]] + [f"{float(v) + 0.0:.15g}" for v in r[1:]])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _load(args, allowed, what):
    cfg = load_config(args.config, args.override)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if cfg.mode not in allowed:
        raise ConfigError(f"{what} needs mode {' or '.join(allowed)}, config has {cfg.mode!r}")
    from .harness import prepare, scenario_bids

    ctx = prepare(cfg)
    if cfg.mode == "two-stage":
        scenario_bids(ctx.case, cfg.scenario)
    return cfg


def _run(args, allowed, what):
    from .harness import RunError, run

    try:
        cfg = _load(args, allowed, what)
    except (ConfigError, CaseError, ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    try:
        art = run(cfg)
    except ClearingInfeasible as exc:
        return _fail(EXIT_INFEASIBLE, f"infeasible: {exc}")
    except RunError as exc:
        return _fail(EXIT_RUNTIME, f"run failed: {exc}; partial artifacts in {cfg.output_dir}")
    except Exception as exc:
        log.exception("unexpected failure")
        return _fail(EXIT_RUNTIME, f"run failed: {exc}; partial artifacts in {cfg.output_dir}")
    s = art.summary
    print(f"operational {s['operational_cost']:.6g} $/yr, expansion {s['expansion_cost']:.6g} $/yr, total {s['total_cost']:.6g} $/yr")
    if art.final_design is not None:
        print("design: " + ", ".join(f"{v:.4g}" for v in art.final_design))
    print(f"artifacts: {art.output_dir}")
    return EXIT_OK


def cmd_train(args):
    return _run(args, ("co-opt-continuous", "co-opt-discrete", "clear-only"), "train")


def cmd_benchmark(args):
    return _run(args, ("two-stage",), "benchmark")


def cmd_report(args):
    from .report import build_report

    dirs = [Path(d) for d in args.runs]
    for d in dirs:
        if not (d / "metrics.jsonl").is_file():
            return _fail(EXIT_INPUT, f"{d}: not a run directory (no metrics.jsonl)")
    try:
        files, audits = build_report(dirs, args.out, plots=not args.no_plots)
    except (ValueError, OSError, KeyError, CaseError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    for f in files:
        print(f)
    bad = False
    for run_id, audit in audits.items():
        if audit.ok:
            print(f"{run_id}: bid constraints hold on {audit.checked} agent-episodes")
        else:
            bad = True
            for ep, agent, what in audit.violations[:20]:
                print(f"{run_id}: episode {ep} agent {agent}: {what}", file=sys.stderr)
    if bad:
        return _fail(EXIT_RUNTIME, "bid-constraint violations found")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit 2, which is reserved for infeasible clearings
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    # verbosity flags work before or after the subcommand
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more log output (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS, help="errors only")
    parser = _Parser(prog="gridco", description=__doc__.splitlines()[0], parents=[common])
    parser.set_defaults(verbose=0, quiet=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clear", parents=[common], help="clear one market snapshot and print the result as CSV")
    p.add_argument("case", help="case file or bundled case name")
    p.add_argument("bids", help="YAML list of bids in case order, or name: bid mapping")
    p.add_argument("--t", type=int, default=0, help="time step of the demand profile (default 0)")
    p.add_argument("--shed-penalty", type=float, default=None, help="enable load shedding at this $/MWh")
    p.add_argument("--design", help="comma-separated design values for the candidate lines")
    p.add_argument("--mode", choices=("continuous", "discrete"), default="continuous", help="design interpretation")
    p.add_argument("--fixed-increment", type=float, default=50.0, help="MW per discrete upgrade")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_clear)

    for name, func, text in (
        ("train", cmd_train, "run co-optimisation (or clear-only evaluation) from a config"),
        ("benchmark", cmd_benchmark, "run the two-stage benchmark from a config"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", nargs="?", help="YAML run config (defaults apply when omitted)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted-path config override, repeatable")
        p.add_argument("--output-dir", help="shortcut for --override output_dir=...")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="plot-ready CSVs, figures and bid audits for run directories")
    p.add_argument("runs", nargs="+", help="one or more run directories")
    p.add_argument("--out", help="output directory (default: the run directory, or ./report for several)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
