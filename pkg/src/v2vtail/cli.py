"""Command-line interface.

    v2vtail run  --config cfg.txt [--sweep-k 4,8,16] [--protocol ASYNC]
                 [--seed N] [--out DIR]
    v2vtail fit  --samples samples.csv [--rounds N] [--seed N] [--out FILE]
    v2vtail ccdf --report DIR [--out FILE]

Exit codes: 0 success, 2 configuration error, 3 simulation error.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .gpd import GpdParams, GpdTailEstimator
from .report import (emit_ccdf, run_experiment, run_sweep, write_ccdf,
                     write_report)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3


def _build_parser():
    parser = argparse.ArgumentParser(prog="v2vtail", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment or a pair-count sweep")
    p_run.add_argument("--config", help="config file (key = value lines)")
    p_run.add_argument("--sweep-k", help="comma-separated pair counts")
    p_run.add_argument("--protocol", help="override the config protocol")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--out", help="output directory (default from config)")

    p_fit = sub.add_parser("fit", help="standalone tail fit on a sample file")
    p_fit.add_argument("--samples", required=True,
                       help="CSV/text file with one excess value per line")
    p_fit.add_argument("--rounds", type=int, default=400)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", help="optional file for the fitted parameters")

    p_ccdf = sub.add_parser("ccdf", help="empirical vs fitted tail table")
    p_ccdf.add_argument("--report", required=True,
                        help="directory produced by 'run'")
    p_ccdf.add_argument("--out", help="output CSV (default <report>/ccdf.csv)")
    return parser


def _load_samples_file(path):
    values = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            # tolerate a samples.csv produced by 'run' (last column is the value)
            token = line.split(",")[-1]
            try:
                values.append(float(token))
            except ValueError:
                continue  # header line
    return np.array(values)


def _cmd_run(args):
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.protocol:
            cfg = replace(cfg, protocol=args.protocol)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        from .config import validate_config
        validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or cfg.out_dir
    try:
        if args.sweep_k:
            ks = [int(s) for s in args.sweep_k.split(",") if s.strip()]
            run_sweep(cfg, ks, out_dir=out_dir)
            print(f"wrote {len(ks)} runs under {out_dir}")
        else:
            report = run_experiment(cfg)
            write_report(report, out_dir)
            m = report.metrics
            print(f"protocol={m.protocol} K={m.n_pairs} "
                  f"avg_power={m.avg_power:.6g} W reliability={m.reliability:.6g} "
                  f"bits_exchanged={m.bytes_exchanged:.6g}")
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def _cmd_fit(args):
    samples = _load_samples_file(args.samples)
    try:
        est = GpdTailEstimator(n_rounds=args.rounds, random_state=args.seed)
        est.fit(samples)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    line = (f"sigma = {est.sigma_:.12g}\nxi = {est.xi_:.12g}\n"
            f"nll = {est.nll_:.12g}\nn_samples = {est.n_samples_}\n")
    print(line, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(line)
    return EXIT_OK


def _cmd_ccdf(args):
    samples_path = os.path.join(args.report, "samples.csv")
    metrics_path = os.path.join(args.report, "metrics.csv")
    if not (os.path.exists(samples_path) and os.path.exists(metrics_path)):
        print(f"config error: {args.report} is not a run report directory",
              file=sys.stderr)
        return EXIT_CONFIG
    samples = _load_samples_file(samples_path)
    with open(metrics_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        row = fh.readline().strip().split(",")
    record = dict(zip(header, row))
    theta = GpdParams(sigma=float(record["sigma_hat"]),
                      xi=float(record["xi_hat"]))
    try:
        rows = emit_ccdf(samples, theta)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.path.join(args.report, "ccdf.csv")
    write_ccdf(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "fit":
        return _cmd_fit(args)
    return _cmd_ccdf(args)


if __name__ == "__main__":
    sys.exit(main())
