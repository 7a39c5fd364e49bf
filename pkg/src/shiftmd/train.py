"""Training of the float baseline and quantization-aware fine-tuning.

The loss is the mean squared error of predicted vs labeled force components
in the scaled local-frame encoding (two in-plane components per hydrogen).
Optimization is plain SGD with multiplicative learning-rate decay; gradients
are computed by hand so the whole pipeline stays deterministic given a seed.

Fine-tuning keeps continuous shadow weights: each step the forward pass sees
the power-of-two reconstruction of the shadow weights while gradients pass
through the quantizer unchanged (straight-through) into the shadows. Biases
stay continuous and are fixed-point encoded only at export.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import md
from .dataset import Dataset, Frame
from .net import (
    Activation,
    FeatureScaling,
    MlpModel,
    forward_float_batch,
    phi_array,
    phi_deriv_array,
    quantize_model,
)
from .quant import QuantConfig, quantize_weight


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 0.1
    lr_decay: float = 0.995
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_rmse: float  # meV/A
    test_rmse: float  # meV/A


# ---------------------------------------------------------------------------
# Sample preparation


def fit_scaling(frames: Sequence[Frame], headroom: float = 1.25, target_span: float = 0.8) -> FeatureScaling:
    """Derive feature and force scaling constants from labeled frames.

    Both bond-length features share one center/halfwidth so the model stays
    symmetric under swapping the hydrogens. Force scales are per output
    component, chosen so scaled targets span about [-target_span, target_span].
    """
    bonds, angles = [], []
    comps = [[], []]
    for fr in frames:
        if fr.forces is None:
            raise ValueError("frames must carry force labels")
        for h in (1, 2):
            fv = md.extract_features(fr.positions, h, scaling=None)
            bonds.extend([fv.values[0], fv.values[1]])
            angles.append(fv.values[2])
            comps[0].append(float(fr.forces[h] @ fv.u))
            comps[1].append(float(fr.forces[h] @ fv.w))
    bonds = np.asarray(bonds)
    angles = np.asarray(angles)
    c_r = 0.5 * (bonds.min() + bonds.max())
    c_a = 0.5 * (angles.min() + angles.max())
    h_r = max(0.5 * (bonds.max() - bonds.min()) * headroom, 1e-6)
    h_a = max(0.5 * (angles.max() - angles.min()) * headroom, 1e-6)
    scales = tuple(
        max(np.max(np.abs(np.asarray(c))) / target_span, 1e-9) for c in comps
    )
    return FeatureScaling((c_r, c_r, c_a), (h_r, h_r, h_a), scales)


def frames_to_samples(frames: Sequence[Frame], scaling: FeatureScaling):
    """Scaled feature matrix X (2F, 3) and scaled target matrix Y (2F, 2)."""
    xs, ys = [], []
    for fr in frames:
        if fr.forces is None:
            raise ValueError("frames must carry force labels")
        for h in (1, 2):
            fv = md.extract_features(fr.positions, h, scaling)
            xs.append(fv.values)
            ys.append(
                [float(fr.forces[h] @ fv.u), float(fr.forces[h] @ fv.w)]
            )
    x = np.asarray(xs)
    y = np.asarray(ys) / scaling.force_scales
    return x, y


# ---------------------------------------------------------------------------
# Core SGD loop


def _phys_rmse(model: MlpModel, x: np.ndarray, y: np.ndarray,
               weights: list[np.ndarray] | None = None) -> float:
    """RMSE in meV/A over de-scaled force components."""
    use = model.weights if weights is None else weights
    a = x
    for w, b in zip(use, model.biases):
        a = phi_array(a @ w.T + b)
    err = (a - y) * model.scaling.force_scales
    return float(np.sqrt(np.mean(err**2))) * 1000.0


def _train_loop(
    model: MlpModel,
    train_xy,
    test_xy,
    cfg: TrainConfig,
    quantize_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    log: Callable[[str], None] | None = None,
) -> None:
    """SGD on the model in place; quantize_fn enables straight-through mode."""
    x_train, y_train = train_xy
    x_test, y_test = test_xy
    if len(x_train) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    n = len(x_train)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            ws = model.weights if quantize_fn is None else [quantize_fn(w) for w in model.weights]
            # forward
            acts = [xb]
            zs = []
            a = xb
            for w, b in zip(ws, model.biases):
                z = a @ w.T + b
                zs.append(z)
                a = phi_array(z)
                acts.append(a)
            err = a - yb
            loss = float(np.mean(err**2))
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch} (lr={lr:g})"
                )
            # backward
            delta = 2.0 * err / err.size * phi_deriv_array(zs[-1])
            for l in range(model.n_layers - 1, -1, -1):
                gw = delta.T @ acts[l]
                gb = delta.sum(axis=0)
                if l > 0:
                    delta = (delta @ ws[l]) * phi_deriv_array(zs[l - 1])
                model.weights[l] -= lr * gw
                model.biases[l] -= lr * gb
        lr *= cfg.lr_decay
        qws = None if quantize_fn is None else [quantize_fn(w) for w in model.weights]
        rec = EpochRecord(
            epoch,
            _phys_rmse(model, x_train, y_train, qws),
            _phys_rmse(model, x_test, y_test, qws) if len(x_test) else float("nan"),
        )
        model.history.append(rec)
        if log is not None:
            log(f"epoch {rec.epoch} train_rmse_mev {rec.train_rmse:.6g} "
                f"test_rmse_mev {rec.test_rmse:.6g}")


def _init_model(arch: Sequence[int], scaling: FeatureScaling, seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(arch, arch[1:]):
        bound = np.sqrt(2.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)) * np.sqrt(3.0))
        biases.append(np.zeros(n_out))
    return MlpModel(list(arch), weights, biases, scaling, Activation.PHI_HW)


def train_cnn(
    dataset: Dataset,
    arch: Sequence[int] = (3, 3, 3, 2),
    cfg: TrainConfig = TrainConfig(),
    log: Callable[[str], None] | None = None,
) -> MlpModel:
    """Train the float baseline from scratch; deterministic given cfg.seed."""
    train_frames = dataset.train_frames
    if not train_frames:
        raise ValueError("dataset has no training frames")
    scaling = fit_scaling(train_frames)
    model = _init_model(arch, scaling, cfg.seed)
    train_xy = frames_to_samples(train_frames, scaling)
    test_frames = dataset.test_frames
    test_xy = frames_to_samples(test_frames, scaling) if test_frames else (np.zeros((0, 3)), np.zeros((0, 2)))
    _train_loop(model, train_xy, test_xy, cfg, None, log)
    return model


def continue_training(
    model: MlpModel,
    dataset: Dataset,
    cfg: TrainConfig,
    quantize_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    log: Callable[[str], None] | None = None,
) -> MlpModel:
    """Resume SGD on a copy of an existing model (shared by fine-tuning)."""
    out = model.copy()
    train_xy = frames_to_samples(dataset.train_frames, out.scaling)
    test_frames = dataset.test_frames
    test_xy = frames_to_samples(test_frames, out.scaling) if test_frames else (np.zeros((0, 3)), np.zeros((0, 2)))
    _train_loop(out, train_xy, test_xy, cfg, quantize_fn, log)
    return out


def make_quantize_fn(qcfg: QuantConfig) -> Callable[[np.ndarray], np.ndarray]:
    def reconstruct(w: np.ndarray) -> np.ndarray:
        flat = [quantize_weight(float(v), qcfg).value() for v in w.ravel()]
        return np.asarray(flat).reshape(w.shape)

    return reconstruct


def finetune_sqnn(
    model: MlpModel,
    dataset: Dataset,
    cfg: TrainConfig,
    qcfg: QuantConfig = QuantConfig(),
    quantize_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    log: Callable[[str], None] | None = None,
) -> MlpModel:
    """Quantization-aware fine-tuning of a pre-trained float model.

    Returns a new model whose quant_weights / fixed-point biases are populated
    from the fine-tuned shadow weights. quantize_fn exists as a seam for
    testing; by default it reconstructs qcfg-quantized weights.
    """
    fn = make_quantize_fn(qcfg) if quantize_fn is None else quantize_fn
    out = continue_training(model, dataset, cfg, fn, log)
    quantize_model(out, qcfg)
    return out


# ---------------------------------------------------------------------------
# Evaluation


def force_components(
    model: MlpModel, frames: Sequence[Frame], engine: md.Engine
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted and labeled in-plane force components, eV/A, shape (2F, 2)."""
    preds, refs = [], []
    for fr in frames:
        if fr.forces is None:
            raise ValueError("frames must carry force labels")
        inplane = md.predict_inplane_forces(model, fr.positions, engine)
        for h in (1, 2):
            fv = md.extract_features(fr.positions, h, scaling=None)
            preds.append(inplane[h - 1])
            refs.append([float(fr.forces[h] @ fv.u), float(fr.forces[h] @ fv.w)])
    return np.asarray(preds), np.asarray(refs)


def eval_force_rmse(model: MlpModel, data, engine: md.Engine = md.Engine.FLOAT) -> float:
    """Force-component RMSE in meV/A on data (a Dataset's test split or frames)."""
    frames = data.test_frames if isinstance(data, Dataset) else data
    if not frames:
        raise ValueError("no labeled frames to evaluate")
    if engine is md.Engine.FLOAT:
        # vectorized float path
        x, y = frames_to_samples(frames, model.scaling)
        pred = forward_float_batch(model, x)
        err = (pred - y) * model.scaling.force_scales
        return float(np.sqrt(np.mean(err**2))) * 1000.0
    pred, ref = force_components(model, frames, engine)
    return float(np.sqrt(np.mean((pred - ref) ** 2))) * 1000.0
