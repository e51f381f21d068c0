"""Forecasting the next domain's correlation matrix from the history of
per-domain matrices.

A stacked LSTM consumes the flattened strict upper triangles of C_1..C_{T-1}
(teacher forcing: true matrices in, one-step-ahead targets out) and a tanh
head emits the next flattened matrix. The training loss per step combines a
Frobenius term, an elementwise-L1 term, and a binary cross-entropy term on
entries affinely mapped from [-1, 1] to [0, 1].
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .correlation import CorrelationMatrix, flatten_upper, unflatten_upper
from .optim import Adam

__all__ = ["PredictorConfig", "PredictorModel", "predict_next", "cp_loss",
           "train_predictor"]

BCE_CLAMP = 1e-6
FRO_GUARD = 1e-24  # keeps sqrt differentiable when prediction == truth


@dataclass(frozen=True)
class PredictorConfig:
    learning_rate: float = 3e-3
    layers: int = 8
    latent_dim: int = 8
    hidden_dim: int = 16
    lambda_ce: float = 20.0
    max_epochs: int = 2000
    patience: int = 50
    tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.lambda_ce < 0:
            raise ValueError("lambda_ce must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if min(self.layers, self.latent_dim, self.hidden_dim, self.max_epochs) < 1:
            raise ValueError("architecture sizes and max_epochs must be positive")


@dataclass
class PredictorModel:
    m: int
    config: PredictorConfig
    params: list
    loss_history: list

    @property
    def input_dim(self) -> int:
        return self.m * (self.m - 1) // 2

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)


def _init_params(m: int, config: PredictorConfig, rng) -> list:
    """Glorot-uniform weights, zero biases except forget gates at +1."""
    p = m * (m - 1) // 2
    h, lat = config.hidden_dim, config.latent_dim

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    params = [glorot(p, lat), np.zeros((1, lat))]
    in_dim = lat
    for _ in range(config.layers):
        params.append(glorot(in_dim + h, 4 * h))
        bias = np.zeros((1, 4 * h))
        bias[0, h:2 * h] = 1.0  # forget gate opens at init
        params.append(bias)
        in_dim = h
    params.append(glorot(h, p))
    params.append(np.zeros((1, p)))
    return params


def _forward_sequence(params: list, rows: list, layers: int, hidden: int) -> list:
    """Head outputs (pre-unflatten, post-tanh) for every step of the sequence."""
    w_embed, b_embed = params[0], params[1]
    w_head, b_head = params[-2], params[-1]
    h_states = [None] * layers
    c_states = [None] * layers
    outputs = []
    for row in rows:
        x = row @ w_embed + b_embed
        for layer in range(layers):
            w, b = params[2 + 2 * layer], params[3 + 2 * layer]
            h_prev, c_prev = h_states[layer], c_states[layer]
            if h_prev is None:
                gates = ad.concat([x, ad.constant(np.zeros((1, hidden)))], axis=1) @ w + b
            else:
                gates = ad.concat([x, h_prev], axis=1) @ w + b
            i = ad.sigmoid(gates[:, 0:hidden])
            f = ad.sigmoid(gates[:, hidden:2 * hidden])
            g = ad.tanh(gates[:, 2 * hidden:3 * hidden])
            o = ad.sigmoid(gates[:, 3 * hidden:4 * hidden])
            c_new = i * g if c_prev is None else f * c_prev + i * g
            h_new = o * ad.tanh(c_new)
            h_states[layer], c_states[layer] = h_new, c_new
            x = h_new
        outputs.append(ad.tanh(x @ w_head + b_head))
    return outputs


def predict_next(model: PredictorModel, sequence: list) -> CorrelationMatrix:
    """Ĉ for the domain after the given history of correlation matrices."""
    if not sequence:
        raise ValueError("sequence must contain at least one matrix")
    if any(c.dim != model.m for c in sequence):
        raise ValueError(f"matrix dim does not match model dim {model.m}")
    rows = [ad.constant(flatten_upper(c).reshape(1, -1)) for c in sequence]
    params = [ad.constant(p) for p in model.params]
    out = _forward_sequence(params, rows, model.config.layers,
                            model.config.hidden_dim)[-1]
    return unflatten_upper(out.value.ravel(), model.m)


def _bce_terms(pred01: np.ndarray, true01: np.ndarray) -> np.ndarray:
    q = np.clip(pred01, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -(true01 * np.log(q) + (1.0 - true01) * np.log(1.0 - q))


def cp_loss(predictions: list, truths: list, lambda_ce: float) -> float:
    """Sum over aligned pairs of Frobenius + elementwise-L1 + λ·mean-BCE.

    BCE treats each entry, mapped from [-1,1] to [0,1], as a soft binary
    target, averaged over all m² positions (clamped away from {0,1}, so the
    diagonal adds a constant ~1e-6 per row).
    """
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions vs {len(truths)} truths")
    total = 0.0
    for pred, truth in zip(predictions, truths):
        if pred.dim != truth.dim:
            raise ValueError("matrix dim mismatch in loss")
        diff = pred.entries - truth.entries
        fro = float(np.sqrt((diff * diff).sum()))
        l1 = float(np.abs(diff).sum())
        bce = float(_bce_terms((pred.entries + 1.0) / 2.0,
                               (truth.entries + 1.0) / 2.0).mean())
        total += fro + l1 + lambda_ce * bce
    return total


def _step_loss_graph(pred_vec, true_vec, m: int, lambda_ce: float):
    """Tape version of one cp_loss term, built from flattened vectors.

    Off-diagonal entries appear twice in the full matrix; the diagonal is
    exactly 1 on both sides, contributing zero to Frobenius/L1 and a clamp
    constant to the BCE mean.
    """
    diff = pred_vec - true_vec
    fro = ad.sqrt(ad.reduce_sum(diff * diff) * 2.0 + FRO_GUARD)
    l1 = ad.reduce_sum(ad.absolute(diff)) * 2.0
    q = ad.clip((pred_vec + 1.0) * 0.5, BCE_CLAMP, 1.0 - BCE_CLAMP)
    p01 = (true_vec + 1.0) * 0.5
    bce_off = -(p01 * ad.log(q) + (1.0 - p01) * ad.log(1.0 - q))
    diag_const = -m * np.log(1.0 - BCE_CLAMP)
    bce = (ad.reduce_sum(bce_off) * 2.0 + diag_const) * (1.0 / (m * m))
    return fro + l1 + bce * lambda_ce


def train_predictor(matrices: list, config: PredictorConfig) -> PredictorModel:
    """Fit the sequence model on C_1..C_T with one-step-ahead targets.

    Full-batch Adam; keeps the best-loss parameters and stops once the best
    loss has not improved by `tol` for `patience` consecutive epochs.
    """
    t_len = len(matrices)
    if t_len < 3:
        raise ValueError(f"need at least 3 matrices to fit a trend, got {t_len}")
    m = matrices[0].dim
    if any(c.dim != m for c in matrices):
        raise ValueError("all matrices must share one dim")
    inputs = np.stack([flatten_upper(c) for c in matrices[:-1]])
    targets = np.stack([flatten_upper(c) for c in matrices[1:]])

    def build(params, inputs_):
        seq, tgt = inputs_
        rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
        outs = _forward_sequence(params, rows, config.layers, config.hidden_dim)
        loss = None
        for s, out in enumerate(outs):
            term = _step_loss_graph(out, tgt[s:s + 1, :], m, config.lambda_ce)
            loss = term if loss is None else loss + term
        return loss

    graph = ad.ComputeGraph(build)
    rng = np.random.default_rng(config.seed)
    params = _init_params(m, config, rng)
    opt = Adam([p.shape for p in params], lr=config.learning_rate)
    best_loss = np.inf
    best_params = copy.deepcopy(params)
    stale = 0
    history = []
    for _ in range(config.max_epochs):
        loss, grads = ad.evaluate_with_gradients(graph, params, [inputs, targets])
        history.append(loss)
        if loss < best_loss - config.tol:
            best_loss, best_params, stale = loss, copy.deepcopy(params), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        opt.step(params, grads)
    return PredictorModel(m=m, config=config, params=best_params,
                          loss_history=history)
