"""Command-line entry point: ``stochtori {simulate,verify-clt,levy-check,period-table}``.

Exit status: 0 pass, 1 fail, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DomainExitError, ReplicaBudgetError, StochToriError
from .output import (csv_text, trajectory_header, trajectory_rows, write_csv, write_json,
                     write_text)
from .rng import child
from .sim import simulate
from .svg import histogram_svg
from .verify import levy_check, period_table, verify_clt

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochtori", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=_u64, help="overrides the seed in the file")
        sp.add_argument("--replicas", type=_positive, help="overrides the file value")
        sp.add_argument("--threads", type=_positive, default=1)
        sp.add_argument("--cache-dir", type=Path, help="oscillator chart cache")

    sim = sub.add_parser("simulate", help="write trajectory CSVs")
    common(sim)
    sim.add_argument("--single-file", action="store_true",
                     help="one indexed CSV instead of one file per replica")
    common(sub.add_parser("verify-clt", help="check the Gaussian limit of angle sums"))
    common(sub.add_parser("levy-check", help="compare sampler CF with Lévy–Khintchine"))
    pt = sub.add_parser("period-table", help="oscillator periods against quadrature")
    pt.add_argument("--m-min", type=_positive, default=1)
    pt.add_argument("--m-max", type=_positive, default=4)
    pt.add_argument("--tol", type=float, default=1e-10)
    pt.add_argument("--out", type=Path)
    pt.add_argument("--cache-dir", type=Path)
    return p


def _out_dir(args, run: RunConfig | None) -> Path:
    out = args.out or (run.output_dir if run else None) or Path(".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _load(args) -> RunConfig:
    return load_config(args.config, {"seed": args.seed, "replicas": args.replicas,
                                     "out": args.out}, args.cache_dir)


def cmd_simulate(args) -> int:
    run = _load(args)
    if run.sim is None:
        raise ConfigError("simulate needs [system], [initial], [noise], [grid], [statistic]")
    out = _out_dir(args, run)
    single = args.single_file or run.single_file
    replicas = args.replicas or run.simulate_replicas
    files, discarded, flagged = [], [], 0
    rows = []
    for r in range(replicas):
        try:
            path = simulate(run.system, run.sim, child(run.seed, r))
        except DomainExitError as exc:
            discarded.append({"replica": r, "grid_index": exc.index})
            continue
        flagged += path.flagged
        if single:
            rows.extend(trajectory_rows(path, r))
        else:
            name = f"trajectory_{r:05d}.csv"
            write_csv(out / name, trajectory_header(path.dim), trajectory_rows(path))
            files.append(name)
    if single:
        write_csv(out / "trajectories.csv", trajectory_header(run.sim.dim, indexed=True), rows)
        files.append("trajectories.csv")
    write_json(out / "metadata.json", {
        "command": "simulate", "version": __version__, "seed": run.seed,
        "replicas": replicas, "files": files, "discarded": len(discarded),
        "discarded_replicas": discarded, "flagged": flagged, "config": run.to_dict()})
    return EXIT_PASS


def cmd_verify_clt(args) -> int:
    run = _load(args)
    out = _out_dir(args, run)
    try:
        res = verify_clt(run, threads=args.threads)
    except ReplicaBudgetError as exc:
        write_json(out / "report.json", {
            "command": "verify-clt", "version": __version__, "pass": False,
            "error": str(exc), "discarded": exc.discarded, "replicas": exc.replicas,
            "config": run.to_dict()})
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_FAIL
    stat = res.statistic
    write_json(out / "report.json", res.report)
    header = ["replica"] + [f"normalized_{j}" for j in range(1, stat.dim + 1)] \
        + [f"raw_sum_{j}" for j in range(1, stat.dim + 1)]
    write_csv(out / "statistic.csv", header,
              ([int(i)] + list(z) + list(s) for i, z, s in
               zip(res.ensemble.replica_ids, stat.normalized, stat.raw_sum)))
    dens = [res.limit.marginal(j).pdf if res.limit.cov[j, j] > 0 else None
            for j in range(stat.dim)]
    titles = [f"normalized sum, coordinate {j + 1} (n={stat.n}, replicas={stat.replicas})"
              for j in range(stat.dim)]
    write_text(out / "histogram.svg", histogram_svg(stat.normalized.T, dens, titles))
    for name, c in res.report["criteria"].items():
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: value={c['value']} bound={c['bound']}")
    return EXIT_PASS if res.passed else EXIT_FAIL


def cmd_levy_check(args) -> int:
    run = _load(args)
    out = _out_dir(args, run)
    res = levy_check(run)
    write_csv(out / "levy_check.csv",
              ["u", "empirical_re", "empirical_im", "analytic_re", "analytic_im", "gap"],
              zip(res.u, res.empirical.real, res.empirical.imag, res.analytic.real,
                  res.analytic.imag, res.gap))
    write_json(out / "levy_check.json", res.report)
    print(f"{'PASS' if res.passed else 'FAIL'} sup_gap={res.report['sup_gap']:.4g} "
          f"(max {res.report['sup_gap_max']})")
    return EXIT_PASS if res.passed else EXIT_FAIL


def cmd_period_table(args) -> int:
    if args.m_max < args.m_min:
        raise ConfigError("--m-max is below --m-min")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    rows = period_table(range(args.m_min, args.m_max + 1), args.tol, args.cache_dir)
    header = ["m", "T_star", "oracle", "abs_difference", "energy_drift", "status"]
    body = [[r.m, r.T_star, r.oracle, r.difference, r.energy_drift, r.status] for r in rows]
    if args.out is not None:
        _out_dir(args, None)
        write_csv(args.out / "period_table.csv", header, body)
    else:
        sys.stdout.write(csv_text(header, body))
    return EXIT_PASS if all(r.status == "ok" for r in rows) else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "verify-clt": cmd_verify_clt,
            "levy-check": cmd_levy_check, "period-table": cmd_period_table}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StochToriError, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
