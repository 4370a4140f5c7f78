"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
non-convergence (or a failed equivalence check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import decompose as dc
from .boosting import GbdtModel, GbdtParams, fit_gbdt
from .data import DataError, Dataset, PerturbationSpec, load_csv
from .encode import build_encoder, encode_rows, original_coefficients, save_encoder, write_matrix_market
from .experiment import (ConfigError, ExperimentConfig, FittedModel, emit_plot_data, evaluate, prepare_data, preset,
                         run_pipeline)
from .refit import ConvergenceWarning, RefitResult, RefitSpec, refit
from .robust import verify_theorem1
from .tree import TreeParams

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
log = logging.getLogger("gbdt_ohe")


class NumericalFailure(RuntimeError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data(p, required=False):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file with a header row", required=required)
    g.add_argument("--target", help="response column of --data")


def _add_gbdt(p):
    g = p.add_argument_group("boosting")
    g.add_argument("--n-estimators", type=int, default=100)
    g.add_argument("--learning-rate", type=float, default=0.1)
    g.add_argument("--max-depth", type=int, default=6)
    g.add_argument("--min-samples-leaf", type=int, default=1)
    g.add_argument("--gamma", type=float, default=0.0)
    g.add_argument("--reg-lambda", type=float, default=0.0)
    g.add_argument("--reg-alpha", type=float, default=0.0)


def _add_config(p):
    g = p.add_argument_group("experiment config")
    g.add_argument("--config", help="JSON experiment config")
    g.add_argument("--preset", help="benchmark preset: airfoil, chp or bs")
    g.add_argument("--data-dir", help="directory with the benchmark CSVs (synthetic stand-ins otherwise)")
    g.add_argument("--split-seed", type=int)
    g.add_argument("--out-dir", help="output directory (overrides the config)")


def _load_data(args) -> Dataset:
    if not args.data:
        raise ConfigError("--data is required")
    if not args.target:
        raise ConfigError("--target is required with --data")
    return load_csv(args.data, args.target)


def _gbdt_params(args) -> GbdtParams:
    tree = TreeParams(max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf, gamma=args.gamma,
                      reg_lambda=args.reg_lambda, reg_alpha=args.reg_alpha)
    return GbdtParams(args.n_estimators, args.learning_rate, tree=tree)


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.preset:
        cfg = preset(args.preset, data_dir=args.data_dir)
    else:
        raise ConfigError("--config or --preset is required")
    if args.split_seed is not None:
        cfg = replace(cfg, split_seed=args.split_seed)
    if args.out_dir:
        cfg = replace(cfg, output_dir=args.out_dir)
    return cfg


def _emit(obj, out):
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_train(args):
    train = _load_data(args)
    model = fit_gbdt(train, _gbdt_params(args))
    model.save(args.out)
    log.info("wrote %s (%d trees)", args.out, model.n_trees)


def cmd_encode(args):
    model = GbdtModel.load(args.model)
    train = _load_data(args)
    enc = build_encoder(model, train)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_encoder(enc, out / "encoder.json")
    write_matrix_market(encode_rows(enc, train), out / "design.mtx")
    beta = original_coefficients(model, enc)
    res = RefitResult(beta, RefitSpec("ridge", 0.0), 0, True)
    d = res.to_dict()
    d["method"] = "original"
    (out / "coef_original.json").write_text(json.dumps(d))
    if args.rows:
        write_matrix_market(encode_rows(enc, load_csv(args.rows, args.target)), out / "design_rows.mtx")
    log.info("p=%d columns (+ intercept), %d unmerged duplicate patterns", enc.p, enc.residual_duplicates)


def cmd_refit(args):
    model = GbdtModel.load(args.model)
    train = _load_data(args)
    enc = build_encoder(model, train)
    design = encode_rows(enc, train)
    if (args.lam is None) == (args.alpha is None):
        raise ConfigError("give exactly one of --lambda or --alpha")
    lam = args.lam if args.lam is not None else 2.0 * train.n * args.alpha
    spec = RefitSpec(args.method, lam, args.tol, args.max_sweeps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = refit(design, train.response, spec, beta0=original_coefficients(model, enc), solver=args.solver)
    _emit(res.to_json(), args.out)
    if not res.converged:
        raise NumericalFailure(f"{args.method} refit did not converge in {res.sweeps_used} sweeps")


def cmd_evaluate(args):
    model = GbdtModel.load(args.model)
    test = _load_data(args)
    train = load_csv(args.train, args.target)
    if args.coef:
        enc = build_encoder(model, train)
        beta = RefitResult.beta_from_dict(json.loads(Path(args.coef).read_text()))
        if beta.shape[0] != enc.n_columns:
            raise ConfigError("coefficient file does not match the encoder rebuilt from --model and --train")
        fm = FittedModel(Path(args.coef).stem, lambda X: encode_rows(enc, X) @ beta)
    else:
        fm = FittedModel(Path(args.model).stem, model.predict)
    table = evaluate([fm], train, test, args.perturb, args.repeats, args.seed)
    _emit(table.to_csv(), args.out)


def _pipeline_for(cfg: ExperimentConfig, name: str, n_train: int):
    if name == "XGB":
        return dc.GbdtPipeline(cfg.gbdt)
    if name == "XGB_reg":
        if cfg.gbdt_reg is None:
            raise ConfigError("config has no gbdt_reg")
        return dc.GbdtPipeline(cfg.gbdt_reg)
    if name == "mean":
        return dc.MeanPipeline()
    for p in cfg.refits:
        if p.name == name:
            return dc.GbdtPipeline(cfg.gbdt, RefitSpec(p.method, p.lam(n_train), cfg.refit_tol,
                                                       cfg.refit_max_sweeps))
    raise ConfigError(f"unknown model {name!r}")


def cmd_decompose(args):
    cfg = _config(args)
    train, test = prepare_data(cfg)
    if args.n_estimators:
        cfg = replace(cfg, gbdt=replace(cfg.gbdt, n_estimators=args.n_estimators))
    spec = PerturbationSpec(args.sigma, cfg.perturb_seed, args.repeats or cfg.repeats)
    rep = dc.estimate_risk_decomposition(train, test, _pipeline_for(cfg, args.model_name, train.n), spec,
                                         args.B or cfg.bootstrap_B)
    d = rep.to_dict()
    d["model"] = args.model_name
    _emit(d, args.out)


def cmd_sweep(args):
    cfg = _config(args)
    train, test = prepare_data(cfg)
    gbdt = cfg.gbdt
    if args.learning_rate:
        gbdt = replace(gbdt, learning_rate=args.learning_rate)
    if args.kind == "rounds":
        rounds = args.rounds or list(range(0, gbdt.n_estimators + 1, max(1, gbdt.n_estimators // 50)))
        gbdt = replace(gbdt, n_estimators=max(rounds))
        family = dc.RoundsFamily(gbdt, tuple(rounds))
        kind = "complexity_sweep"
    else:
        if not args.lambdas:
            raise ConfigError("--lambdas is required for a lambda sweep")
        family = dc.PenaltyFamily(gbdt, args.method, tuple(args.lambdas), cfg.refit_tol, cfg.refit_max_sweeps)
        kind = "lambda_sweep"
    spec = PerturbationSpec(args.sigma, cfg.perturb_seed, args.repeats or cfg.repeats)
    reports = dc.decomposition_sweep(train, test, family, spec, args.B or cfg.bootstrap_B)
    out = args.out or str(Path(cfg.output_dir) / f"{kind}.csv")
    emit_plot_data(reports, kind, out)
    if args.stack:
        emit_plot_data(reports, "decomposition_stack", Path(out).with_name(Path(out).stem + "_stack.csv"))
    print(out)


def cmd_verify(args):
    rep = verify_theorem1(args.trials, args.seed, args.samples)
    _emit(rep.to_json(), args.out)
    if rep.failures:
        raise NumericalFailure(f"{len(rep.failures)} check(s) failed")


def cmd_reproduce(args):
    cfg = _config(args)
    table = run_pipeline(cfg)
    print(table.render())
    print(f"wrote {Path(cfg.output_dir) / 'results.csv'}")
    bad = [r["model"] for r in table.rows if not r["converged"]]
    if bad:
        log.warning("refits without a convergence certificate: %s", ", ".join(sorted(set(bad))))
        if args.strict:
            raise NumericalFailure("non-converged refits")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gbdt-ohe", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a boosted ensemble and save it as JSON")
    _add_data(p, required=True)
    _add_gbdt(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="leaf one-hot design, encoder map and original coefficients")
    p.add_argument("--model", required=True)
    _add_data(p, required=True)
    p.add_argument("--rows", help="optional second CSV to encode with the same encoder")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("refit", help="ridge or lasso refit of the leaf coefficients")
    p.add_argument("--model", required=True)
    _add_data(p, required=True)
    p.add_argument("--method", choices=("ridge", "lasso"), required=True)
    p.add_argument("--lambda", dest="lam", type=float, help="penalty on the unscaled squared error")
    p.add_argument("--alpha", type=float, help="penalty on the 1/(2n)-scaled error (lambda = 2 n alpha)")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-sweeps", type=int, default=10000)
    p.add_argument("--solver", choices=("auto", "cd"), default="auto")
    p.add_argument("--out")
    p.set_defaults(func=cmd_refit)

    p = sub.add_parser("evaluate", help="perturbed test MSE and perturbation term")
    p.add_argument("--model", required=True)
    p.add_argument("--coef", help="refit coefficients; the encoder is rebuilt from --model and --train")
    _add_data(p, required=True)
    p.add_argument("--train", required=True, help="training CSV (noise scale, encoder)")
    p.add_argument("--perturb", type=_floats, default=[0.0, 0.02, 0.05])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decompose", help="bootstrap risk decomposition for one model")
    _add_config(p)
    p.add_argument("--model-name", default="XGB", help="XGB, XGB_reg, mean or a refit preset name")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("-B", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--n-estimators", type=int, help="override the ensemble size")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("sweep", help="decomposition across boosting rounds or penalties (plot data)")
    _add_config(p)
    p.add_argument("--kind", choices=("rounds", "lambda"), default="rounds")
    p.add_argument("--rounds", type=_ints)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--method", choices=("ridge", "lasso"), default="ridge")
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("-B", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--stack", action="store_true", help="also write the stacked-terms CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-theorem1", help="numerical check of the robust/regularized equivalence")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="full benchmark table for one dataset")
    _add_config(p)
    p.add_argument("--strict", action="store_true", help="exit 3 if any refit lacks a convergence certificate")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DataError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
