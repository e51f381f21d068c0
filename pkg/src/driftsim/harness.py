"""Downstream evaluation: assemble method-specific training sets, fit small
feedforward models on them, and score on the true held-out domain.

Methods: "coda" (simulate the next domain with the correlation forecast),
"coda-without-C" (same generator, no correlation pull), "lastdomain" (train
on the final source), "offline" (train on all sources pooled), "incfinetune"
(sequential fine-tuning across sources at reduced learning rate), "prelim"
(the density-forecasting baseline). The target domain is only ever touched by
the final scoring call; its row count alone feeds the sample-size choice.
"""
from __future__ import annotations

import copy
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .correlation import pearson_matrix
from .datasets import (CLASSIFICATION, REGRESSION, DomainDataset, DomainStream,
                       NormalizationStats, fit_apply_normalization)
from .optim import Adam
from .predictor import PredictorConfig, predict_next, train_predictor
from .simulator import SimulatorConfig, sample, train_simulator

__all__ = ["DownstreamConfig", "DownstreamModel", "ExperimentConfig",
           "ExperimentReport", "SweepPoint", "METHODS", "train_downstream",
           "evaluate", "run_experiment", "sweep"]

METHODS = ("coda", "coda-without-C", "lastdomain", "offline", "incfinetune",
           "prelim")
CLAMP = 1e-6


@dataclass(frozen=True)
class DownstreamConfig:
    hidden_dims: tuple = (50, 50)
    learning_rate: float = 1e-2
    max_epochs: int = 2000
    patience: int = 50
    tol: float = 1e-5
    seed: int = 0


@dataclass
class DownstreamModel:
    task: str
    config: DownstreamConfig
    params: list
    loss_history: list

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Class probability (classification) or raw prediction (regression)."""
        out = _forward_mlp([ad.constant(p) for p in self.params],
                           ad.constant(features), self.task)
        return out.value.ravel()


def _forward_mlp(params, x, task):
    h = x
    for i in range(0, len(params) - 2, 2):
        h = ad.relu(h @ params[i] + params[i + 1])
    out = h @ params[-2] + params[-1]
    return ad.sigmoid(out) if task == CLASSIFICATION else out


def _mlp_loss(params, x, y, task):
    out = _forward_mlp(params, x, task)
    if task == CLASSIFICATION:
        q = ad.clip(out, CLAMP, 1.0 - CLAMP)
        return ad.reduce_mean(-(y * ad.log(q) + (1.0 - y) * ad.log(1.0 - q)))
    diff = out - y
    return ad.reduce_mean(diff * diff)


def _init_mlp(d: int, hidden_dims, rng) -> list:
    params = []
    in_dim = d
    for h in (*hidden_dims, 1):
        limit = np.sqrt(6.0 / (in_dim + h))
        params += [rng.uniform(-limit, limit, size=(in_dim, h)), np.zeros((1, h))]
        in_dim = h
    return params


def _fit_mlp(data: DomainDataset, config: DownstreamConfig,
             init_params: list | None = None,
             learning_rate: float | None = None) -> DownstreamModel:
    rng = np.random.default_rng(config.seed)
    params = (copy.deepcopy(init_params) if init_params is not None
              else _init_mlp(data.d, config.hidden_dims, rng))
    lr = config.learning_rate if learning_rate is None else learning_rate
    x = data.features
    y = data.labels.reshape(-1, 1)
    graph = ad.ComputeGraph(
        lambda ps, ins: _mlp_loss(ps, ins[0], ins[1], data.task))
    opt = Adam([p.shape for p in params], lr=lr)
    best_loss = np.inf
    best_params = copy.deepcopy(params)
    stale = 0
    history = []
    for _ in range(config.max_epochs):
        loss, grads = ad.evaluate_with_gradients(graph, params, [x, y])
        history.append(loss)
        if loss < best_loss - config.tol:
            best_loss, best_params, stale = loss, copy.deepcopy(params), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        opt.step(params, grads)
    return DownstreamModel(task=data.task, config=config, params=best_params,
                           loss_history=history)


def train_downstream(train_data: DomainDataset,
                     config: DownstreamConfig) -> DownstreamModel:
    """Adam-fit a ReLU feedforward net to one training domain."""
    return _fit_mlp(train_data, config)


def evaluate(model: DownstreamModel, test: DomainDataset,
             stats: NormalizationStats | None = None) -> float:
    """Misclassification % at threshold 0.5, or MAE in raw label units."""
    if model.task != test.task:
        raise ValueError(f"task mismatch: model {model.task}, data {test.task}")
    preds = model.predict(test.features)
    if test.task == CLASSIFICATION:
        hard = (preds >= 0.5).astype(np.float64)
        return float(100.0 * np.mean(hard != test.labels))
    mae = float(np.mean(np.abs(preds - test.labels)))
    return mae * (stats.label_scale if stats is not None else 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    predictor: PredictorConfig = PredictorConfig()
    simulator: SimulatorConfig = SimulatorConfig()
    downstream: DownstreamConfig = DownstreamConfig()
    seeds: tuple = (0, 1, 2, 3, 4)
    sample_rate: float = 1.0
    normalization: str = "minmax"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    metric: str               # "mce_percent" or "mae"
    seed_values: tuple
    mean: float
    std: float
    config_snapshot: dict
    wall_clock_s: float

    def to_dict(self) -> dict:
        return {"method": self.method, "metric": self.metric,
                "seed_values": list(self.seed_values), "mean": self.mean,
                "std": self.std, "config": self.config_snapshot,
                "wall_clock_s": self.wall_clock_s}


def _assemble_training_set(stream: DomainStream, method: str,
                           config: ExperimentConfig, seed: int):
    """Training data for one method on an already-normalized stream.

    Returns (dataset, extra) where extra carries method-specific artifacts
    (the predicted matrix for "coda").
    """
    sources = stream.sources
    if method == "coda":
        mats = [pearson_matrix(s) for s in sources]
        model = train_predictor(mats, replace(config.predictor, seed=seed))
        c_hat = predict_next(model, mats)
        sim = train_simulator(sources[-1], c_hat,
                              replace(config.simulator, seed=seed))
        n = max(8, round(stream.target.n * config.sample_rate))
        return sample(sim, n, seed=seed + 101), {"predicted_corr": c_hat,
                                                 "simulator": sim}
    if method == "coda-without-C":
        sim = train_simulator(sources[-1], None,
                              replace(config.simulator, seed=seed, lambda_c=0.0))
        n = max(8, round(stream.target.n * config.sample_rate))
        return sample(sim, n, seed=seed + 101), {"simulator": sim}
    if method == "lastdomain":
        return sources[-1], {}
    if method == "offline":
        pooled = DomainDataset(
            domain_index=sources[-1].domain_index,
            features=np.vstack([s.features for s in sources]),
            labels=np.concatenate([s.labels for s in sources]),
            task=stream.task, feature_names=sources[0].feature_names)
        return pooled, {}
    if method == "prelim":
        from .density_baseline import PrelimConfig, train_prelim
        synth = train_prelim(stream, PrelimConfig(seed=seed))
        return synth, {}
    raise ValueError(f"unknown method {method!r}")


def _run_single(stream: DomainStream, method: str, config: ExperimentConfig,
                seed: int) -> float:
    normalized, stats = fit_apply_normalization(stream, config.normalization)
    down_cfg = replace(config.downstream, seed=seed)
    if method == "incfinetune":
        model = None
        base_lr = down_cfg.learning_rate
        for i, src in enumerate(normalized.sources):
            model = _fit_mlp(src, down_cfg,
                             init_params=None if model is None else model.params,
                             learning_rate=base_lr if i == 0 else 0.1 * base_lr)
        return evaluate(model, normalized.target, stats)
    train_set, _ = _assemble_training_set(normalized, method, config, seed)
    model = train_downstream(train_set, down_cfg)
    return evaluate(model, normalized.target, stats)


def run_experiment(stream, method: str, config: ExperimentConfig) -> ExperimentReport:
    """Score one method over all configured seeds and aggregate.

    `stream` is either a fixed DomainStream or a seed -> DomainStream factory
    (synthetic benchmarks regenerate their noise draws per repeat).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    t0 = time.perf_counter()
    values = []
    for seed in config.seeds:
        concrete = stream(seed) if callable(stream) else stream
        values.append(_run_single(concrete, method, config, seed))
    metric = "mce_percent" if _task_of(stream) == CLASSIFICATION else "mae"
    arr = np.array(values)
    std = float(arr.std(ddof=1)) if len(values) > 1 else 0.0
    return ExperimentReport(
        method=method, metric=metric, seed_values=tuple(values),
        mean=float(arr.mean()), std=std,
        config_snapshot=_snapshot(config), wall_clock_s=time.perf_counter() - t0)


def _task_of(stream) -> str:
    concrete = stream(0) if callable(stream) else stream
    return concrete.task


def _snapshot(config: ExperimentConfig) -> dict:
    return {"predictor": asdict(config.predictor),
            "simulator": asdict(config.simulator),
            "downstream": asdict(config.downstream),
            "seeds": list(config.seeds), "sample_rate": config.sample_rate,
            "normalization": config.normalization}


@dataclass(frozen=True)
class SweepPoint:
    value: float
    test: ExperimentReport
    validation: ExperimentReport | None = None


def _with_value(config: ExperimentConfig, parameter: str,
                value: float) -> ExperimentConfig:
    if parameter == "lambda_c":
        return replace(config, simulator=replace(config.simulator, lambda_c=value))
    if parameter == "sample_rate":
        return replace(config, sample_rate=value)
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def _validation_stream(stream: DomainStream) -> DomainStream:
    if len(stream.sources) < 3:
        raise ValueError("validation split needs at least 3 source domains")
    return DomainStream(sources=stream.sources[:-1], target=stream.sources[-1])


def sweep(stream, parameter: str, values, config: ExperimentConfig,
          method: str = "coda", validate: bool = False) -> list:
    """One full experiment per parameter value, optionally with a validation
    run that holds out the last source domain as a pseudo-target."""
    if not values:
        raise ValueError("sweep needs at least one value")
    points = []
    for value in values:
        cfg = _with_value(config, parameter, value)
        test_report = run_experiment(stream, method, cfg)
        val_report = None
        if validate:
            if callable(stream):
                val_stream: Callable = lambda seed, s=stream: _validation_stream(s(seed))
            else:
                val_stream = _validation_stream(stream)
            val_report = run_experiment(val_stream, method, cfg)
        points.append(SweepPoint(value=float(value), test=test_report,
                                 validation=val_report))
    return points
