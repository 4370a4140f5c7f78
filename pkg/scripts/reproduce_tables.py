"""Test MSE / perturbation-term tables for the benchmark presets, over several split seeds."""
import argparse
import logging
from pathlib import Path

from gbdt_ohe.experiment import ConfigError, preset, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", default="airfoil,chp", help="comma-separated: airfoil, chp, bs")
    ap.add_argument("--seeds", default="0", help="comma-separated split seeds")
    ap.add_argument("--data-dir", help="directory holding the real CSVs; synthetic stand-ins otherwise")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    for name in args.presets.split(","):
        for seed in (int(s) for s in args.seeds.split(",")):
            try:
                cfg = preset(name, data_dir=args.data_dir, split_seed=seed,
                             output_dir=str(Path(args.out) / name / f"seed{seed}"))
            except ConfigError as exc:
                print(f"skipping {name}: {exc}")
                break
            table = run_pipeline(cfg)
            print(f"\n{name}, split seed {seed} ({cfg.output_dir})")
            print(table.render())


if __name__ == "__main__":
    main()
