"""Bit-exact emulator of a shift-accumulate fixed-point MLP force engine,
its training/quantization pipeline, and a water-molecule MD harness."""

__version__ = "0.1.0"

from .fxp import FxFormat, FxValue, Q2_10, Q5_10, encode_fx
from .quant import QuantConfig, ShiftWeight, quantize_weight
from .net import Activation, FeatureScaling, MlpModel, load_model, save_model

__all__ = [
    "FxFormat", "FxValue", "Q2_10", "Q5_10", "encode_fx",
    "QuantConfig", "ShiftWeight", "quantize_weight",
    "Activation", "FeatureScaling", "MlpModel", "load_model", "save_model",
    "__version__",
]
