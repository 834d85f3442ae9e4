"""Command line: run experiment matrices, plot them, learn DFAs, print monitors."""

from __future__ import annotations

import argparse
import logging
import os
import sys

OUT_ENV = "NMRL_OUT"


def cmd_run(args) -> int:
    from .config import ExperimentConfig
    from .harness import run_matrix
    from .plotting import emit_plots

    config = ExperimentConfig.load(args.config)
    out = args.out or os.environ.get(OUT_ENV) or os.path.join("results", config.name)
    rs = run_matrix(config, out, args.workers)
    if not args.no_plots:
        emit_plots(out, png=not args.no_png)
    print(f"{len(rs.results)} cells, {len(rs.rows)} checkpoint rows, {len(rs.failures)} failures -> {out}")
    for f in rs.failures:
        print(f"failed: {f.cell.run_id(config.env)}: {f.error}", file=sys.stderr)
    return 1 if rs.failures else 0


def cmd_plot(args) -> int:
    from .plotting import emit_plots

    for path in emit_plots(args.results_dir, args.out, png=not args.no_png):
        print(path)
    return 0


def cmd_learn_dfa(args) -> int:
    from .core import read_abbadingo
    from .edsm import consistent_with, edsm_run

    with open(args.file, encoding="utf-8") as fh:
        samples, n_symbols = read_abbadingo(fh)
    dfa = edsm_run(samples, n_symbols, prefix_negative=args.prefix_negative, score_mode=args.score_mode)
    if not consistent_with(dfa, samples, args.prefix_negative):
        print("warning: result is not consistent with the sample", file=sys.stderr)
    print(dfa.to_dot() if args.format == "dot" else dfa.to_text(), end="")
    return 0


def cmd_oracle(args) -> int:
    from .envs import ROBOT_ACTIONS, make_env
    from .oracle import solve

    params = {}
    if args.env == "robot":
        params = dict(size=args.size, n_stains=args.n_stains, n_fruits=args.n_fruits,
                      episode_length=args.episode_length)
    env = make_env(args.env, args.scheme, 0, **params)
    machines = env.ground_truth_machines()
    types = range(len(machines)) if args.type is None else [args.type]
    names = list(ROBOT_ACTIONS) if args.env == "robot" else [f"arm{i + 1}" for i in range(env.n_actions)]
    for t in types:
        d = machines[t]
        print(f"# {args.env} {args.scheme} type {t}: {d.n_states} states")
        print(d.to_dot(names) if args.format == "dot" else d.to_text(), end="")
    if args.value:
        sol = solve(env)
        print(f"# optimal expected return over one episode: {sol.value:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment matrix from an INI config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or results/<name>)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--no-plots", action="store_true")
    r.add_argument("--no-png", action="store_true", help="write gnuplot files only")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="plot a results directory")
    pl.add_argument("results_dir")
    pl.add_argument("--out", help="plot directory (default: <results_dir>/plots)")
    pl.add_argument("--no-png", action="store_true")
    pl.set_defaults(func=cmd_plot)

    ld = sub.add_parser("learn-dfa", help="run state merging on an Abbadingo sample file")
    ld.add_argument("file")
    ld.add_argument("--score-mode", choices=["pairs", "evidence"], default="pairs")
    ld.add_argument("--no-prefix-negative", dest="prefix_negative", action="store_false",
                    help="do not treat strict prefixes of samples as negative")
    ld.add_argument("--format", choices=["text", "dot"], default="text")
    ld.set_defaults(func=cmd_learn_dfa)

    o = sub.add_parser("oracle", help="print ground-truth reward machines")
    o.add_argument("env", choices=["mab", "robot"])
    o.add_argument("scheme")
    o.add_argument("--type", type=int)
    o.add_argument("--format", choices=["text", "dot"], default="text")
    o.add_argument("--value", action="store_true", help="also print the optimal episodic return")
    o.add_argument("--size", type=int, default=5)
    o.add_argument("--n-stains", type=int, default=2)
    o.add_argument("--n-fruits", type=int, default=2)
    o.add_argument("--episode-length", type=int, default=60)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
