"""Hierarchical classification of dementia subtypes from cortical thickness.

The pipeline runs surfaces -> thickness -> smoothing -> region means and
spectral coefficients -> per-step PCA -> a cascade of binary classifiers,
evaluated by repeated stratified cross-validation.
"""
from .classifiers import BinaryScorer, fit_binary, lda_fit, nb_fit, svm_fit
from .dataset import (LABELS, Cohort, DiagnosticLabel, Subject, SyntheticSpec, generate_synthetic,
                      load_cohort, save_cohort)
from .errors import ConvergenceError, DataError, NumericalError
from .evaluation import (EvalConfig, evaluate_cascade, evaluate_flat, make_folds, metrics,
                         roc_curve)
from .hierarchy import (HierarchySpec, Node, PcaPolicy, classify, default_hierarchy,
                        train_cascade, train_flat)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BinaryScorer", "fit_binary", "lda_fit", "nb_fit", "svm_fit", "LABELS", "Cohort",
           "DiagnosticLabel", "Subject", "SyntheticSpec", "generate_synthetic", "load_cohort",
           "save_cohort", "ConvergenceError", "DataError", "NumericalError", "EvalConfig",
           "evaluate_cascade", "evaluate_flat", "make_folds", "metrics", "roc_curve",
           "HierarchySpec", "Node", "PcaPolicy", "classify", "default_hierarchy", "train_cascade",
           "train_flat", "BACKEND"]
