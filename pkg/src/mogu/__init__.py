"""Gaussian mixture-of-experts forecasting with precision-based gating."""
from .data import (NoiseProfile, RawSeries, SplitSpec, WindowSet, load_csv, make_windows,
                   prepare, synth_heteroscedastic)
from .evaluation import EvalReport, mae_mse, pearson, spearman, uncertainty_error_correlation
from .experts import ExpertSpec
from .mixture import MixtureModel, MixtureOutput, MixtureSpec, ModelSpec
from .train import TrainConfig, TrainRecord, train, validate

__version__ = "0.1.0"
