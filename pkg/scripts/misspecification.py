"""Misspecification versus in-class bias for small ensembles on y = x^2 + noise.

The reference coefficients for each leaf design come from a near-unpenalized
ridge fit on a large independent sample; the in-class part compares them with
the bootstrap mean of a refit on the training data.
"""
import argparse

import numpy as np

from gbdt_ohe import GbdtParams, TreeParams, build_encoder, fit_gbdt, synth_square
from gbdt_ohe.decompose import bias_split, reference_coefficients
from gbdt_ohe.refit import RefitSpec, refit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", default="1,2,5,10,20")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--lam", type=float, default=1.0, help="ridge penalty of the bootstrap refits")
    ap.add_argument("-B", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rounds = [int(v) for v in args.rounds.split(",")]
    train = synth_square(args.n, args.seed)
    test = synth_square(10**4, args.seed + 1)
    sample = synth_square(10**5, args.seed + 2)
    model = fit_gbdt(train, GbdtParams(max(rounds), 0.1, tree=TreeParams(max_depth=3)))
    spec = RefitSpec("ridge", args.lam)

    def fit_beta(design, y):
        return refit(design, y, spec).beta

    print(f"{'M':>4} {'p':>5} {'misspec':>9} {'in-class':>9}")
    for M in rounds:
        enc = build_encoder(model.truncate(M), train)
        rep = bias_split(train, test, enc, fit_beta, reference_coefficients(enc, sample), B=args.B, seed=args.seed)
        print(f"{M:4d} {enc.p:5d} {rep.misspecification_bias:9.4f} {rep.in_class_bias:9.2e}")
    print(f"noise variance of the test set: {np.mean((test.response - test.truth) ** 2):.4f}")


if __name__ == "__main__":
    main()
