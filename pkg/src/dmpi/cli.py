"""Command-line front end.

    dmpi validate --config cfg.yaml
    dmpi simulate --config cfg.yaml --out series.csv
    dmpi run      --config cfg.yaml --out results/ [--replications R] [--threads T] [--dry-run]
    dmpi sweep-m  --config cfg.yaml --out results/ [--m 1 10 50]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
Every CSV is deterministic given the resolved config; wall-clock figures go to
``timings.csv`` and ``manifest.json`` only.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from .errors import ConfigError, DMPIError
from .evaluation import format_table, summary_rows
from .histograms import histogram_rows
from .nkpc import MOMENT_NAMES, ModelVariant, simulate_series

log = logging.getLogger("dmpi")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def _cell(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def resolve_config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "replications", None) is not None:
        cfg.replications = args.replications
    if getattr(args, "m", None):
        cfg.sampler.M_values = list(args.m)
    return cfg.validate()


class Manifest:
    """Collects artifact paths and writes ``manifest.json`` next to them."""

    def __init__(self, out_dir, cfg, command):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.command = command
        self.artifacts = []
        self.t0 = time.perf_counter()

    def add(self, path):
        self.artifacts.append(Path(path))
        return path

    def write(self, extra=None):
        import numba
        import scipy
        import yaml

        def digest(p):
            return hashlib.sha256(p.read_bytes()).hexdigest()

        body = {
            "command": self.command,
            "config_name": self.cfg.name,
            "config_hash": self.cfg.digest(),
            "seed": self.cfg.seed,
            "artifacts": {str(p.relative_to(self.out_dir)): digest(p) for p in self.artifacts},
            "versions": {
                "dmpi": __version__, "python": platform.python_version(), "numpy": np.__version__,
                "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__,
            },
            "wall_clock_seconds": round(time.perf_counter() - self.t0, 3),
        }
        body.update(extra or {})
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(body, indent=2) + "\n")
        return path


# ---------------------------------------------------------------- commands

def cmd_validate(args):
    cfg = resolve_config(args)
    print(f"ok: {cfg.name} ({cfg.variant}, {len(cfg.priors)} parameters) hash {cfg.digest()}")
    return EXIT_OK


def cmd_simulate(args):
    from .pipeline import replication_streams

    cfg = resolve_config(args)
    rep = args.rep
    streams = replication_streams(cfg, rep)
    series = simulate_series(cfg.truth_params(), ModelVariant.CORRECT, cfg.empirical.T,
                             cfg.empirical.burn_in, streams["data"])
    out = Path(args.out or "series.csv")
    if out.suffix != ".csv":
        out = out / "series.csv"
    write_csv(out, ["t", "d_pi", "phi"], ((t + 1, a, b) for t, (a, b) in enumerate(series)))
    print(f"wrote {len(series)} rows to {out} (seed {cfg.seed}, replication {rep})")
    return EXIT_OK


def plan_text(cfg, M_values):
    s = cfg.sampler
    lines = [
        f"config     {cfg.name} [{cfg.digest()}]",
        f"variant    {cfg.variant}; parameters {', '.join(cfg.param_names)}",
        f"data       T={cfg.empirical.T} after {cfg.empirical.burn_in} burn-in; N={cfg.empirical.N} VAR draws",
        f"reference  H={cfg.H}; K={cfg.grids.K} bins",
        f"sampler    Z={s.Z}, J={s.iterations}, burn-in {s.burn_in}, proposal {s.proposal}, "
        f"likelihood {s.likelihood}, delta {s.delta}",
        f"M values   {list(M_values)}",
        f"seed       {cfg.seed}; replications {cfg.replications}",
    ]
    if s.init == "pilot":
        lines.append(f"pilot      M=1 chain, J={s.pilot_iterations}, burn-in {s.pilot_burn_in}")
    return "\n".join(lines)


def write_replication(out_dir, rep_out, cfg, manifest):
    """Per-replication CSV artifacts."""
    d = Path(out_dir) / f"rep{rep_out.rep:03d}"
    p = rep_out.problem
    add = manifest.add
    add(write_csv(d / "series.csv", ["t", "d_pi", "phi"],
                  ((t + 1, a, b) for t, (a, b) in enumerate(p.series))))
    add(write_csv(d / "empirical_draws.csv", ["draw_id"] + [f"m{i + 1}" for i in range(len(MOMENT_NAMES))],
                  ((j + 1, *row) for j, row in enumerate(p.empirical_draws))))
    grids = cfg.moment_grids()
    add(write_csv(d / "histograms.csv", ["moment_id", "bin_index", "bin_lower", "bin_upper", "count", "frequency"],
                  histogram_rows(p.empirical.counts, grids, MOMENT_NAMES)))
    names = cfg.param_names
    cap = cfg.output.draws_csv_max
    for M, res in rep_out.results.items():
        md = d / f"M{M}"
        out = res.output
        keep = np.unique(np.linspace(0, len(out.draws) - 1, min(cap, len(out.draws))).astype(int))
        rows = ((out.iteration[i], out.particle[i], j + 1, *out.draws[i, j])
                for i in keep for j in range(M))
        add(write_csv(md / "posterior_draws.csv", ["iter", "particle", "draw"] + names, rows))
        tr = out.trace
        add(write_csv(md / "diagnostics.csv", ["iter", "ess", "acceptance_rate", "delta", "psi", "log_kernel_mean"],
                      zip(range(1, len(tr["ess"]) + 1), tr["ess"], tr["acceptance_rate"], tr["delta"],
                          tr["psi"], tr["log_kernel_mean"])))
        add(write_csv(md / "theory_histograms.csv",
                      ["moment_id", "bin_index", "bin_lower", "bin_upper", "count", "frequency"],
                      histogram_rows(res.theory_counts, grids, MOMENT_NAMES)))


def _execute(cfg, args, command):
    from .pipeline import run_experiment, summarize

    out_dir = Path(args.out or f"results/{cfg.name}")
    M_values = list(cfg.sampler.M_values)
    print(plan_text(cfg, M_values))
    if args.dry_run:
        print("dry run: configuration valid, nothing sampled")
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, command)
    resolved = out_dir / "config.yaml"
    resolved.write_text(cfg.dumps())
    manifest.add(resolved)
    reps = run_experiment(cfg, M_values, threads=args.threads)
    for r in reps:
        write_replication(out_dir, r, cfg, manifest)
    summaries = summarize(cfg, reps)
    rows = summary_rows(summaries)
    manifest.add(write_csv(out_dir / "summary.csv", list(rows[0]), (r.values() for r in rows)))
    truth = [cfg.truth[n] for n in cfg.param_names]
    table = format_table(summaries, truth)
    (out_dir / "summary.txt").write_text(table)
    manifest.add(out_dir / "summary.txt")
    timings = [(r.rep, M, round(res.runtime, 3)) for r in reps for M, res in r.results.items()]
    write_csv(out_dir / "timings.csv", ["replication", "M", "runtime_seconds"], timings)
    return out_dir, manifest, reps, summaries, table


def cmd_run(args):
    cfg = resolve_config(args)
    done = _execute(cfg, args, "run")
    if done is None:
        return EXIT_OK
    out_dir, manifest, _, _, table = done
    manifest.write()
    print(table)
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_sweep_m(args):
    cfg = resolve_config(args)
    done = _execute(cfg, args, "sweep-m")
    if done is None:
        return EXIT_OK
    out_dir, manifest, reps, summaries, _ = done
    rows = []
    for M, s in sorted(summaries.items()):
        rt = float(np.mean([r.results[M].runtime for r in reps]))
        rows.append((M, s.replications, *s.log_ml, *s.log_lik, *s.log_prior))
        print(f"M={M:>4}  log ML {s.log_ml[0]:10.2f}  log Lik {s.log_lik[0]:10.2f}  "
              f"log Prior {s.log_prior[0]:10.2f}  ({rt:.1f}s)")
    manifest.add(write_csv(out_dir / "sweep_m.csv",
                           ["M", "replications", "log_ml", "log_ml_sd", "log_lik", "log_lik_sd",
                            "log_prior", "log_prior_sd"], rows))
    runtimes = {str(M): float(np.mean([r.results[M].runtime for r in reps])) for M in summaries}
    manifest.write({"mean_runtime_seconds_by_M": runtimes})
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="dmpi", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress per replication and M")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="experiment YAML (defaults to the built-in correct-model config)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="override the master seed")

    sp = sub.add_parser("validate", help="check a config and print its hash")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="write one simulated series as CSV")
    common(sp, "CSV path or directory (default series.csv)")
    sp.add_argument("--rep", type=int, default=0, help="replication whose data stream to use")
    sp.set_defaults(func=cmd_simulate)

    for name, func, help_ in (("run", cmd_run, "full pipeline with per-M artifacts and summary table"),
                              ("sweep-m", cmd_sweep_m, "log ML / likelihood / prior curve over M")):
        sp = sub.add_parser(name, help=help_)
        common(sp, "output directory (default results/<config name>)")
        sp.add_argument("--replications", type=int)
        sp.add_argument("--threads", type=int, default=1, help="replications run in parallel processes")
        sp.add_argument("--m", type=int, nargs="+", help="override the list of M values")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
        sp.set_defaults(func=func)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc.tagged(), file=sys.stderr)
        return EXIT_CONFIG
    except DMPIError as exc:
        print(exc.tagged(), file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"[dmpi] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
