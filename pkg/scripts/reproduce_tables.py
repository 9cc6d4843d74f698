"""Run the shipped experiment configs and print one summary table per config.

    python scripts/reproduce_tables.py                      # all desk-scale configs
    python scripts/reproduce_tables.py misspecified_flat --replications 1

The full-scale config is skipped unless named explicitly; it needs days of CPU.
"""
import argparse
import time
from pathlib import Path

from dmpi import config as cm
from dmpi.evaluation import format_table
from dmpi.pipeline import run_experiment, summarize

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
DESK = ["misspecified_informative", "correct_informative", "correct_wrong_prior", "misspecified_flat"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("names", nargs="*", default=DESK)
    ap.add_argument("--replications", type=int)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for name in args.names:
        cfg = cm.load(CONFIG_DIR / f"{name}.yaml")
        if args.replications:
            cfg.replications = args.replications
        t0 = time.perf_counter()
        reps = run_experiment(cfg.validate(), threads=args.threads)
        table = format_table(summarize(cfg, reps), [cfg.truth[n] for n in cfg.param_names])
        print(f"\n== {name}: {cfg.replications} replications, {time.perf_counter() - t0:.0f}s")
        print(table)


if __name__ == "__main__":
    main()
