"""Local differential classification privacy (LDCP) verification for ReLU classifiers."""

from .dataset import (EncodedDataset, EncodingError, FeatureSchema, LooView, encode_categorical,
                      encode_record, load_csv, synth_dataset)
from .hypernet import (HyperNetConfig, IntervalHyperNetwork, abstracts, interval_abstraction, jaccard,
                       pred_hyper_net, propagate_bounds, stopping_condition)
from .mlp import LooTrainer, MlpArchitecture, MlpNetwork, TrainConfig, classify, forward, train
from .predint import Interval, KdeModel, confidence_interval, kde_cdf, pred_int
from .verify import (ConfusionMatrix, CoverageMetrics, Neighborhood, Verdict, confusion, coverage_metrics,
                     naive_ldcp, neighborhood_box, sphynx_verify)

__version__ = "0.1.0"

__all__ = [
    "EncodedDataset", "EncodingError", "FeatureSchema", "LooView", "encode_categorical", "encode_record",
    "load_csv", "synth_dataset", "HyperNetConfig", "IntervalHyperNetwork", "abstracts",
    "interval_abstraction", "jaccard", "pred_hyper_net", "propagate_bounds", "stopping_condition",
    "LooTrainer", "MlpArchitecture", "MlpNetwork", "TrainConfig", "classify", "forward", "train",
    "Interval", "KdeModel", "confidence_interval", "kde_cdf", "pred_int", "ConfusionMatrix",
    "CoverageMetrics", "Neighborhood", "Verdict", "confusion", "coverage_metrics", "naive_ldcp",
    "neighborhood_box", "sphynx_verify",
]
