"""csodl: compressive-sensing codec for quasi-periodic biosignals with
online-learned personalized dictionaries."""

__version__ = "0.1.0"

from .core import (
    Dictionary,
    Epoch,
    Measurements,
    SensingMatrix,
    SolverConfig,
    SparseCode,
    compression_ratio,
    prd,
)
from .estimators import CompressiveSensingCodec, OnlineDictionaryLearner
from .odl import OdlConfig, TrainState, init_dictionary, train
from .preprocess import FilterSpec, bandpass_filter, notch_filter, segment, split_dataset
from .sensing import encode, generate_sensing_matrix
from .solvers import basis_pursuit_reconstruct, soft_threshold, sparse_code

__all__ = [
    "CompressiveSensingCodec",
    "Dictionary",
    "Epoch",
    "FilterSpec",
    "Measurements",
    "OdlConfig",
    "OnlineDictionaryLearner",
    "SensingMatrix",
    "SolverConfig",
    "SparseCode",
    "TrainState",
    "bandpass_filter",
    "basis_pursuit_reconstruct",
    "compression_ratio",
    "encode",
    "generate_sensing_matrix",
    "init_dictionary",
    "notch_filter",
    "prd",
    "segment",
    "soft_threshold",
    "sparse_code",
    "split_dataset",
    "train",
]
