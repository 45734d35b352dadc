"""Command-line driver: ``aoii <command> [--config FILE] [--out FILE] ...``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 failed
verification.  Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from .config import MODES, ExperimentConfig, load_config
from .errors import ConfigError, NumericalError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
TARGETS = ("table2", "fig6a", "fig6b", "fig6c")


def _add_common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--seed", type=int, help="random seed (overrides `seeds`)")
    p.add_argument("--slots", type=int, help="simulated slots per run (overrides `T`)")
    p.add_argument("--mode", choices=MODES, help="analytic values, simulation, or both")
    p.add_argument("--jobs", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoii", description="Optimal update policies under AoII.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("optimize", "solve the rate-constrained problem for one delta"),
                       ("simulate", "Monte-Carlo evaluation of a policy"),
                       ("sweep", "optimize over a delta grid"),
                       ("verify", "cross-check closed forms against the value-iteration oracle")]:
        _add_common(sub.add_parser(name, help=text))
    rep = sub.add_parser("reproduce", help="built-in reference experiments")
    rep.add_argument("target", choices=TARGETS)
    rep.add_argument("--plot", help="also render the CSV to this image file (fig6 only)")
    _add_common(rep)
    return parser


def resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {"seeds": [args.seed] if args.seed is not None else None, "T": args.slots,
                 "mode": args.mode, "jobs": args.jobs}
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
            cfg.explicit.add(key)
    return cfg


def _emit(table, cfg, args):
    text = table.to_csv()
    header = f"# aoii {args.command}" + (f" {args.target}" if args.command == "reproduce" else "") + "\n"
    sidecar = header + cfg.resolved()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        with open(args.out + ".cfg", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(sidecar)
    else:
        sys.stdout.write(text)
        sys.stderr.write("".join("# " + line + "\n" for line in sidecar.splitlines()[1:]))


def run(args) -> int:
    cfg = resolve(args)
    if args.command == "reproduce":
        default_mode = "analytic" if args.target == "table2" else "both"
        if "mode" not in cfg.explicit:
            cfg.mode = default_mode
        if "T" not in cfg.explicit:
            cfg.T = ex.DEFAULT_SLOTS
        cfg.check()
        if args.target == "table2":
            table = ex.table2(cfg.mode, cfg.T, cfg.seeds[0], cfg.jobs)
        else:
            deltas = cfg.delta_grid if "delta_grid" in cfg.explicit else ex.FIG6_DELTAS
            table = ex.fig6(args.target, cfg.mode, cfg.T, cfg.seeds[0], cfg.jobs, deltas)
            if args.plot:
                plot_fig6(table, args.plot, args.target)
        _emit(table, cfg, args)
        return EXIT_OK
    if args.command == "sweep" and "delta_grid" not in cfg.explicit:
        cfg.delta_grid = list(ex.FIG6_DELTAS)
    cfg.check()
    if args.command == "optimize":
        if len(cfg.delta_grid) != 1:
            raise ConfigError("optimize takes a single delta; use sweep for a grid")
        table = ex.optimize(cfg)
        rec = table.records()[0]
        sys.stderr.write(f"lambda*={ex.fmt(rec['lambda_star'])} thresholds=({rec['n_low']},"
                         f"{rec['n_high']}) mu={ex.fmt(rec['mu'])} avg_aoii={ex.fmt(rec['avg_aoii'])} "
                         f"avg_error={ex.fmt(rec['avg_error'])} rate={ex.fmt(rec['rate'])}\n")
    elif args.command == "sweep":
        table = ex.optimize(cfg)
    elif args.command == "simulate":
        if "T" not in cfg.explicit:
            cfg.T = 10**6
        table = ex.simulate_cmd(cfg)
    else:
        table, ok = ex.verify(cfg)
        _emit(table, cfg, args)
        failed = [r for r in table.records() if not r["passed"]]
        sys.stderr.write(f"verify: {len(table.rows)} checks, {len(failed)} failed\n")
        for r in failed:
            sys.stderr.write(f"FAIL {r['check']} {r}\n")
        return EXIT_OK if ok else EXIT_VERIFY
    _emit(table, cfg, args)
    return EXIT_OK


def plot_fig6(table, path, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    recs = table.records()
    for name in dict.fromkeys(r["policy"] for r in recs):
        pts = [(r["delta"], r["sim_penalty"] if r["sim_penalty"] == r["sim_penalty"] else r["analytic_penalty"])
               for r in recs if r["policy"] == name]
        ax.plot(*zip(*pts), marker="o", label=name)
    ax.set_xlabel("delta")
    ax.set_ylabel("average penalty")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_VALIDATION, exc)


if __name__ == "__main__":
    sys.exit(main())
