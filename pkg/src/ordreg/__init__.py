"""Exchangeable target encodings, decoders and weighted-kappa evaluation for ordinal regression.

An ordinal regressor is split into three parts: a model emitting arbitrary
vectors, a target function giving the training vector of each class, and a
classification function decoding outputs back to classes.
"""

from .classify import ClassifierKind, classify, classify_batch, compatible_classifiers, is_compatible
from .data import Dataset, Sample, SplitPlan, SynthConfig, generate, load, save, split
from .encodings import (Encoding, EncodingKind, OrdinalScale, TargetMatrix, encode, encode_labels,
                        target_matrix, vector_length)
from .errors import (CompatibilityError, ConfigError, DataError, DataParseError, DegenerateOutputError,
                     InvalidClassError, InvalidScaleError, OrdregError, SchemaError, ShapeError,
                     TrainingDivergedError, UndefinedKappaError)
from .harness import (ExperimentConfig, MethodResult, ResultTable, rank, rank_change_report, render,
                      run_experiment)
from .metrics import ConfusionMatrix, KappaResult, Weighting, fold_spread, kappa, macro_average, weight
from .model import (MlpConfig, ModelParams, OptimState, TrainConfig, adamw_step, backward, cosine_lr,
                    forward, init_params, mse_loss, train)

__version__ = "0.1.0"
