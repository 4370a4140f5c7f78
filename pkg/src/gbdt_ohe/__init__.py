"""Boosted trees as sparse linear models: leaf encoding, regularized refits, robustness decomposition."""
from .boosting import GbdtModel, GbdtParams, fit_gbdt, predict, staged_predict
from .data import (DataError, Dataset, PerturbationSpec, column_stats, load_csv, perturb, split, synth_airfoil_like,
                   synth_chp_like, synth_square)
from .decompose import (BiasSplitReport, GbdtPipeline, LinearFit, MeanPipeline, PenaltyFamily, RiskReport,
                        RoundsFamily, bias_split, decomposition_sweep, estimate_risk_decomposition,
                        reference_coefficients)
from .encode import LeafEncoder, build_encoder, encode_rows, original_coefficients
from .refit import ConvergenceWarning, RefitResult, RefitSpec, objective, refit, regularization_path
from .robust import UncertaintySet, robust_objective, verify_theorem1, worst_case_perturbation
from .tree import Tree, TreeParams, assign_leaf, fit_tree, predict_tree

__all__ = [
    "BiasSplitReport", "ConvergenceWarning", "DataError", "Dataset", "GbdtModel", "GbdtParams", "GbdtPipeline",
    "LeafEncoder", "LinearFit", "MeanPipeline", "PenaltyFamily", "PerturbationSpec", "RefitResult", "RefitSpec",
    "RiskReport", "RoundsFamily", "Tree", "TreeParams", "UncertaintySet", "assign_leaf", "bias_split",
    "build_encoder", "column_stats", "decomposition_sweep", "encode_rows", "estimate_risk_decomposition",
    "fit_gbdt", "fit_tree", "load_csv", "objective", "original_coefficients", "perturb", "predict",
    "predict_tree", "reference_coefficients", "refit", "regularization_path", "robust_objective", "split",
    "staged_predict", "synth_airfoil_like", "synth_chp_like", "synth_square", "verify_theorem1",
    "worst_case_perturbation",
]
