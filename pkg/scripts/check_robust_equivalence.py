"""Random-instance check that the signal-scaled robust problem equals the squared-norm penalized one."""
import argparse
import sys

from gbdt_ohe.robust import verify_theorem1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=10000)
    args = ap.parse_args()
    rep = verify_theorem1(args.trials, args.seed, args.samples)
    print(rep.to_json())
    return 1 if rep.failures else 0


if __name__ == "__main__":
    sys.exit(main())
