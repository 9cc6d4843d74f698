"""Log ML, log likelihood and log prior as functions of M for one config.

    python scripts/m_sweep.py configs/misspecified_informative.yaml --m 1 10 50 100 300 --replications 1
    python scripts/m_sweep.py configs/correct_informative.yaml --units prior_sd

Prints the curve and writes it to <out>/sweep_<name>.csv.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from dmpi import config as cm
from dmpi.pipeline import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config")
    ap.add_argument("--m", type=int, nargs="+")
    ap.add_argument("--replications", type=int)
    ap.add_argument("--units", choices=["raw", "prior_sd"])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    cfg = cm.load(args.config)
    if args.m:
        cfg.sampler.M_values = args.m
    if args.replications:
        cfg.replications = args.replications
    if args.units:
        cfg.evaluation.units = args.units
    cfg.validate()
    reps = run_experiment(cfg, threads=args.threads)
    rows = []
    for M in cfg.sampler.M_values:
        vals = np.array([[r.results[M].log_ml, r.results[M].log_lik, r.results[M].log_prior] for r in reps])
        rows.append((M, *vals.mean(axis=0), vals[:, 0].std(ddof=1) if len(vals) > 1 else 0.0))
    print(f"{cfg.name} ({cfg.evaluation.units} units, {cfg.replications} replications)")
    print(f"{'M':>5} {'log ML':>11} {'log Lik':>11} {'log Prior':>11} {'sd(log ML)':>11}")
    for M, ml, ll, lp, sd in rows:
        print(f"{M:>5} {ml:11.2f} {ll:11.2f} {lp:11.2f} {sd:11.2f}")
    best = max(rows, key=lambda r: r[1])[0]
    print(f"argmax M = {best}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{cfg.name}_{cfg.evaluation.units}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "log_ml", "log_lik", "log_prior", "log_ml_sd"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
