"""Age-modulated k-hop graph convolution, temporal embedding updates and training."""
from .batched import Batch, finite_difference, grad_all, make_batch, predict, total_loss
from .features import SubjectFeatures, cohort_features, subject_features
from .model import GcnModel, TrainConfig, init_model, load_checkpoint, save_checkpoint
from .ops import (CLASSIFY, REGRESS_AGE, EmbeddingState, GcnError, age_modulate, layer_forward,
                  readout, segment_forward, temporal_update)
from .train import METRIC_COLUMNS, EpochMetrics, auc, evaluate, stratified_split, train

__all__ = [
    "Batch", "finite_difference", "grad_all", "make_batch", "predict", "total_loss",
    "SubjectFeatures", "cohort_features", "subject_features",
    "GcnModel", "TrainConfig", "init_model", "load_checkpoint", "save_checkpoint",
    "CLASSIFY", "REGRESS_AGE", "EmbeddingState", "GcnError", "age_modulate", "layer_forward",
    "readout", "segment_forward", "temporal_update",
    "METRIC_COLUMNS", "EpochMetrics", "auc", "evaluate", "stratified_split", "train",
]
