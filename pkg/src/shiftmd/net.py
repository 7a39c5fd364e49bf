"""MLP definition and its three forward engines.

The same model can be evaluated three ways:
  * forward_float  - float64 reference (the "continuous" baseline),
  * forward_fqnn   - 16-bit fixed-point weights with true multiplications,
  * forward_sqnn   - shift-accumulate datapath with power-of-two weights.

The activation is applied to every layer including the output one, so the
model predicts in the activation's [-1, 1] range; FeatureScaling maps physical
features and forces in and out of that range.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fxp import (
    Q2_10,
    Q5_10,
    FxFormat,
    FxValue,
    WideAcc,
    encode_fx,
    fx_mul,
    narrow,
    saturate,
)
from .quant import QuantConfig, ShiftWeight, quantize_weight, shift_mul

MODEL_FORMAT_TAG = "shiftmd-model/1"


class Activation(enum.Enum):
    PHI_HW = "phi_hw"
    TANH_REF = "tanh_ref"


# ---------------------------------------------------------------------------
# Activation functions


def phi_ref(x: float) -> float:
    """Clamped-quadratic activation: x - x|x|/4 on (-2, 2), +-1 outside."""
    if x >= 2.0:
        return 1.0
    if x <= -2.0:
        return -1.0
    return x - x * abs(x) / 4.0


def phi_deriv(x: float) -> float:
    """Derivative of phi_ref: 1 - |x|/2 inside (-2, 2), 0 outside."""
    ax = abs(x)
    if ax >= 2.0:
        return 0.0
    return 1.0 - ax / 2.0


def phi_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mid = x - x * np.abs(x) / 4.0
    return np.where(x >= 2.0, 1.0, np.where(x <= -2.0, -1.0, mid))


def phi_deriv_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) >= 2.0, 0.0, 1.0 - np.abs(x) / 2.0)


def phi_fx(x: FxValue) -> FxValue:
    """Fixed-point activation unit.

    Clamps at +-2.0 raw, otherwise computes x - ((x*|x|) >> frac_bits >> 2):
    the squared term is taken in the wide domain, rescaled by frac_bits with
    truncation, then divided by 4 with a further truncating shift.
    """
    fmt = x.fmt
    one = 1 << fmt.frac_bits
    two = one << 1
    if x.raw >= two:
        return FxValue(one, fmt)
    if x.raw <= -two:
        return FxValue(-one, fmt)
    t = ((x.raw * abs(x.raw)) >> fmt.frac_bits) >> 2
    return FxValue(x.raw - t, fmt)


# ---------------------------------------------------------------------------
# Model container


@dataclass(frozen=True)
class FeatureScaling:
    """Affine maps between physical quantities and the datapath range.

    Scaled features are (raw - center) / halfwidth; model outputs times
    force_scales give physical force components (eV/A).
    """

    centers: tuple[float, ...]
    halfwidths: tuple[float, ...]
    force_scales: tuple[float, ...]

    def __post_init__(self):
        if len(self.centers) != len(self.halfwidths):
            raise ValueError("centers and halfwidths must have equal length")
        if any(h <= 0 for h in self.halfwidths) or any(s <= 0 for s in self.force_scales):
            raise ValueError("halfwidths and force_scales must be positive")

    @classmethod
    def identity(cls, n_in: int, n_out: int) -> "FeatureScaling":
        return cls((0.0,) * n_in, (1.0,) * n_in, (1.0,) * n_out)

    def scale_features(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.centers) / self.halfwidths

    def unscale_outputs(self, outputs: np.ndarray) -> np.ndarray:
        return np.asarray(outputs, dtype=float) * self.force_scales


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # per layer, shape (out, in)
    biases: list[np.ndarray]  # per layer, shape (out,)
    scaling: FeatureScaling
    activation: Activation = Activation.PHI_HW
    fx_format: FxFormat = Q2_10
    quant_cfg: QuantConfig | None = None
    quant_weights: list[list[list[ShiftWeight]]] | None = None  # [layer][out][in]
    fx_bias_raws: list[list[int]] | None = None
    history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("weights/biases must match layer count")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != expect:
                raise ValueError(f"layer {l} weight shape {w.shape} != {expect}")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ValueError(f"layer {l} bias shape {b.shape}")
        if len(self.scaling.centers) != self.layer_sizes[0]:
            raise ValueError("scaling.centers must match input width")
        if len(self.scaling.force_scales) != self.layer_sizes[-1]:
            raise ValueError("scaling.force_scales must match output width")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            scaling=self.scaling,
            activation=self.activation,
            fx_format=self.fx_format,
            quant_cfg=self.quant_cfg,
            quant_weights=self.quant_weights,
            fx_bias_raws=self.fx_bias_raws,
            history=list(self.history),
        )


def quantize_model(model: MlpModel, qcfg: QuantConfig) -> None:
    """Populate quant_weights / fx_bias_raws from the float parameters."""
    model.quant_cfg = qcfg
    model.quant_weights = [
        [[quantize_weight(float(w), qcfg) for w in row] for row in layer]
        for layer in model.weights
    ]
    model.fx_bias_raws = [
        [encode_fx(float(b), model.fx_format).raw for b in layer]
        for layer in model.biases
    ]


# ---------------------------------------------------------------------------
# Forward engines


def _act_float(model: MlpModel, z: np.ndarray) -> np.ndarray:
    if model.activation is Activation.PHI_HW:
        return phi_array(z)
    return np.tanh(z)


def forward_float(model: MlpModel, x) -> np.ndarray:
    """Float64 reference pass over a single scaled input vector."""
    a = np.asarray(x, dtype=float)
    if a.shape != (model.layer_sizes[0],):
        raise ValueError(f"input shape {a.shape} != ({model.layer_sizes[0]},)")
    for w, b in zip(model.weights, model.biases):
        a = _act_float(model, w @ a + b)
    return a


def forward_float_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Vectorized float pass over rows of x (used by training and eval)."""
    a = np.asarray(x, dtype=float)
    for w, b in zip(model.weights, model.biases):
        a = _act_float(model, a @ w.T + b)
    return a


def forward_sqnn(model: MlpModel, inputs: list[FxValue]) -> list[FxValue]:
    """Shift-accumulate datapath pass.

    Per neuron: wide accumulation of shift_mul products over the inputs, wide
    bias add, truncating rescale to the datapath format with saturation, then
    the fixed-point activation. Layer outputs feed the next layer directly.
    """
    if model.quant_weights is None or model.fx_bias_raws is None:
        raise ValueError("model has no quantized weights; run quantize_model first")
    if model.activation is not Activation.PHI_HW:
        raise ValueError("the datapath implements only the phi_hw activation")
    fmt = model.fx_format
    if len(inputs) != model.layer_sizes[0]:
        raise ValueError("input width mismatch")
    for v in inputs:
        if v.fmt != fmt:
            raise ValueError("inputs must be in the datapath format")
    widen_bits = -model.quant_cfg.exp_min
    acc_frac = fmt.frac_bits + widen_bits
    acts = list(inputs)
    for layer_w, layer_b in zip(model.quant_weights, model.fx_bias_raws):
        nxt = []
        for row, bias_raw in zip(layer_w, layer_b):
            total = 0
            for w, x in zip(row, acts):
                total += shift_mul(w, x, widen_bits).raw
            total += bias_raw << widen_bits
            pre = narrow(WideAcc(total, acc_frac), fmt)
            nxt.append(phi_fx(pre))
        acts = nxt
    return acts


def forward_fqnn(model: MlpModel, inputs: list[FxValue], fmt: FxFormat = Q5_10) -> list[FxValue]:
    """16-bit multiply-based baseline pass.

    Same dataflow as forward_sqnn but weights are fixed-point encoded and each
    product goes through fx_mul; the per-neuron sum keeps integer headroom and
    saturates when written back to the format.
    """
    if model.activation is not Activation.PHI_HW:
        raise ValueError("the datapath implements only the phi_hw activation")
    if len(inputs) != model.layer_sizes[0]:
        raise ValueError("input width mismatch")
    for v in inputs:
        if v.fmt != fmt:
            raise ValueError("inputs must be in the baseline format")
    acts = list(inputs)
    for w, b in zip(model.weights, model.biases):
        nxt = []
        for j in range(w.shape[0]):
            total = 0
            for k in range(w.shape[1]):
                wq = encode_fx(float(w[j, k]), fmt)
                total += fx_mul(wq, acts[k]).raw
            total += encode_fx(float(b[j]), fmt).raw
            pre = FxValue(saturate(total, fmt), fmt)
            nxt.append(phi_fx(pre))
        acts = nxt
    return acts


# ---------------------------------------------------------------------------
# Model file IO


def model_to_dict(model: MlpModel) -> dict:
    doc = {
        "format": MODEL_FORMAT_TAG,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation.value,
        "fx_format": {"total_bits": model.fx_format.total_bits,
                      "frac_bits": model.fx_format.frac_bits},
        "scaling": {
            "centers": list(model.scaling.centers),
            "halfwidths": list(model.scaling.halfwidths),
            "force_scales": list(model.scaling.force_scales),
        },
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "quant": None,
    }
    if model.quant_cfg is not None and model.quant_weights is not None:
        doc["quant"] = {
            "k": model.quant_cfg.k,
            "exp_min": model.quant_cfg.exp_min,
            "exp_max": model.quant_cfg.exp_max,
            "weights": [
                [[{"s": w.sign, "e": list(w.exponents)} for w in row] for row in layer]
                for layer in model.quant_weights
            ],
            "bias_raws": [list(layer) for layer in model.fx_bias_raws],
        }
    return doc


def model_from_dict(doc: dict) -> MlpModel:
    if doc.get("format") != MODEL_FORMAT_TAG:
        raise ValueError(f"unsupported model format tag: {doc.get('format')!r}")
    scaling = FeatureScaling(
        tuple(doc["scaling"]["centers"]),
        tuple(doc["scaling"]["halfwidths"]),
        tuple(doc["scaling"]["force_scales"]),
    )
    model = MlpModel(
        layer_sizes=list(doc["layer_sizes"]),
        weights=[np.array(w, dtype=float) for w in doc["weights"]],
        biases=[np.array(b, dtype=float) for b in doc["biases"]],
        scaling=scaling,
        activation=Activation(doc["activation"]),
        fx_format=FxFormat(**doc["fx_format"]),
    )
    q = doc.get("quant")
    if q is not None:
        model.quant_cfg = QuantConfig(k=q["k"], exp_min=q["exp_min"], exp_max=q["exp_max"])
        model.quant_weights = [
            [[ShiftWeight(w["s"], tuple(w["e"])) for w in row] for row in layer]
            for layer in q["weights"]
        ]
        model.fx_bias_raws = [list(layer) for layer in q["bias_raws"]]
    return model


def save_model(model: MlpModel, path) -> None:
    # sort_keys plus repr-based float serialization makes the file
    # byte-for-byte reproducible for identical parameters
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True))


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
