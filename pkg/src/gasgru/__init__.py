"""Wavelet features and an external-attention GRU for MOS gas-mixture recognition.

The pipeline: simulate (or load) two-sensor recordings, take a one-level db5
transform per channel, train the attention + GRU classifier with 5-fold
cross-validation, and compare it against KNN, random forest and linear SVM
baselines on a held-out test split.
"""

from .baselines import BaselineConfig, KnnConfig, RfConfig, SvmConfig, fit_baseline
from .dataset import Dataset, DatasetError, FoldPlan, GasLabel, Sample, SplitPlan, load_dataset, make_folds, \
    stratified_split
from .metrics import EvalReport, comparison_table, confusion, evaluate_model
from .nn import ModelDims, ModelParams, ShapeError, init_params
from .simgen import GenConfig, generate_dataset, write_dataset
from .train import Checkpoint, TrainConfig, load_checkpoint, run_cv, save_checkpoint, train_fold
from .wavelet import DB5, FeatureSequence, dwt1, extract_features, idwt1

__version__ = "0.1.0"

__all__ = [
    "DB5",
    "BaselineConfig",
    "Checkpoint",
    "Dataset",
    "DatasetError",
    "EvalReport",
    "FeatureSequence",
    "FoldPlan",
    "GasLabel",
    "GenConfig",
    "KnnConfig",
    "ModelDims",
    "ModelParams",
    "RfConfig",
    "Sample",
    "ShapeError",
    "SplitPlan",
    "SvmConfig",
    "TrainConfig",
    "comparison_table",
    "confusion",
    "dwt1",
    "evaluate_model",
    "extract_features",
    "fit_baseline",
    "generate_dataset",
    "idwt1",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "make_folds",
    "run_cv",
    "save_checkpoint",
    "stratified_split",
    "train_fold",
    "write_dataset",
]
