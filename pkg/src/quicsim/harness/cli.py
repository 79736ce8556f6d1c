"""Command-line front end.

    quicsim run --config exp.cfg [--cc newreno] [--duration 18] [--seed 1]
                [--flows 2] [--out results] [--no-plots]
    quicsim compare --ccs newreno,vegas,quic [same overrides]

Exit codes: 0 success, 1 configuration error, 2 runtime assertion failure.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

from quicsim.cc import algorithm_names
from quicsim.errors import ConfigError, QuicSimError
from quicsim.harness.config import ExperimentConfig, parse_config_file
from quicsim.harness.experiment import run_experiment
from quicsim.harness.plots import render_figures
from quicsim.harness.traces import emit_traces
from quicsim.sim.engine import sec

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _add_common(parser):
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument("--duration", type=float, help="simulated seconds")
    parser.add_argument("--seed", type=int, help="simulation RNG seed")
    parser.add_argument("--flows", type=int, help="client/server pairs")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering; CSVs are always written")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quicsim",
        description="Deterministic dumb-bell experiments over a simulated "
                    "QUIC transport stack.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single experiment")
    run.add_argument("--cc", choices=algorithm_names(),
                     help="congestion control algorithm")
    _add_common(run)

    compare = sub.add_parser(
        "compare", help="run the same experiment once per congestion control")
    compare.add_argument("--ccs", default="newreno,vegas,quic",
                         help="comma-separated algorithm names")
    _add_common(compare)
    return parser


def _load_config(args):
    cfg = ExperimentConfig()
    if args.config:
        cfg = parse_config_file(args.config, cfg)
    overrides = {}
    if args.duration is not None:
        overrides["duration"] = sec(args.duration)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.flows is not None:
        overrides["flows"] = args.flows
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "cc", None):
        overrides["cc"] = args.cc
    if args.no_plots:
        overrides["plots"] = False
    return replace(cfg, **overrides).validate()


def _run_one(cfg, out_dir):
    run = run_experiment(cfg)
    emit_traces(out_dir, run.recorders, run.summary)
    if cfg.plots:
        render_figures(out_dir, run.recorders, title=cfg.cc)
    return run.summary


def _print_summary(summary, out_dir):
    print(f"[{summary.cc}] combined goodput "
          f"{summary.combined_goodput_bps / 1e6:.3f} Mbps -> {out_dir}")
    for flow in summary.flows:
        print(f"  flow {flow.flow_id}: goodput {flow.goodput_bps / 1e6:.3f} Mbps, "
              f"mean RTT {flow.mean_rtt_s * 1000:.1f} ms, "
              f"steady cwnd {flow.steady_cwnd_bytes / 1000:.1f} kB, "
              f"retransmissions {flow.retransmissions}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "run":
            summary = _run_one(cfg, cfg.out_dir)
            _print_summary(summary, cfg.out_dir)
        else:
            ccs = [name.strip() for name in args.ccs.split(",") if name.strip()]
            if not ccs:
                raise ConfigError("--ccs requires at least one algorithm")
            comparison = {}
            for cc in ccs:
                sub_cfg = replace(cfg, cc=cc).validate()
                out_dir = os.path.join(cfg.out_dir, cc)
                summary = _run_one(sub_cfg, out_dir)
                _print_summary(summary, out_dir)
                comparison[cc] = {
                    "combined_goodput_bps": summary.combined_goodput_bps,
                    "mean_rtt_s": [f.mean_rtt_s for f in summary.flows],
                    "steady_cwnd_bytes": [f.steady_cwnd_bytes
                                          for f in summary.flows],
                }
            path = os.path.join(cfg.out_dir, "comparison.json")
            os.makedirs(cfg.out_dir, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(comparison, fh, indent=2, sort_keys=True)
                fh.write("\n")
            print(f"comparison written to {path}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuicSimError, AssertionError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
