"""Laplacian-kernel SVM and RVM classifiers for session patterns."""

from .kernels import KernelSpec, cross_gram, gram, kernel_eval, median_sigma
from .model_selection import (CvResult, TrainConfig, cross_validate, load_model, model_from_dict,
                              model_to_dict, save_model, stratified_folds, train_rvm, train_svm)
from .rvm import RvmConfig, RvmModel, fit_rvm, predict_rvm
from .svm import SvmModel, TrainingError, dual_objective, fit_svm, kkt_gap, predict_svm, solve_dual

__all__ = [
    "KernelSpec", "kernel_eval", "gram", "cross_gram", "median_sigma",
    "TrainConfig", "CvResult", "cross_validate", "stratified_folds",
    "train_svm", "train_rvm", "save_model", "load_model", "model_to_dict", "model_from_dict",
    "SvmModel", "fit_svm", "predict_svm", "solve_dual", "dual_objective", "kkt_gap",
    "RvmModel", "RvmConfig", "fit_rvm", "predict_rvm", "TrainingError",
]
