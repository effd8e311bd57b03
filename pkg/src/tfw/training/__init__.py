from tfw.training.config import PRESETS, TrainConfig, classifier_preset, sequence_preset
from tfw.training.crossval import compare_models, cross_validate
from tfw.training.metrics import CrossValReport, MetricsReport, confusion_matrix, per_class_prf, weighted_prf
from tfw.training.trainer import TrainResult, evaluate, init_from, predict, train
from tfw.training.experiment import SeedResult, TemporalResult, ambiguous_accuracy, temporal_signature
