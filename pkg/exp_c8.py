"""Diagnose the lambda-monotonicity failure: separate checkpoint-selection
overfit of the frozen regularizer draw, label-binarization bias in the eval
draw, and genuine optimization failure."""
from dataclasses import replace

import numpy as np

from driftsim import autodiff as ad
from driftsim import simulator as sm
from driftsim.correlation import matrix_distance, pearson_matrix
from driftsim.datasets import (CLASSIFICATION, DomainDataset,
                               fit_apply_normalization, make_moons_stream)
from driftsim.predictor import PredictorConfig, predict_next, train_predictor
from driftsim.simulator import SimulatorConfig, sample, train_simulator

stream = make_moons_stream()
normalized, _ = fit_apply_normalization(stream, "minmax")
mats = [pearson_matrix(s) for s in normalized.sources]


def cont_corr(model, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.config.latent_dim))
    params = [ad.constant(p) for p in model.params]
    rows = sm._decode(params, model.config, ad.constant(z),
                      CLASSIFICATION).value
    return pearson_matrix(DomainDataset(0, rows[:, :model.d],
                                        rows[:, model.d],
                                        task="regression"))


for seed in (0, 1, 3, 4):
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    print(f"seed {seed}: |c_hat - C8|_1 = "
          f"{matrix_distance(c_hat, mats[-1], 'elementwise-l1'):.3f}")
    for lam in (0.0, 1.0, 10.0):
        sim = train_simulator(normalized.sources[-1],
                              None if lam == 0.0 else c_hat,
                              replace(SimulatorConfig(), seed=seed,
                                      lambda_c=lam))
        synth = sample(sim, 1000, seed=seed + 101)
        d_thresh = matrix_distance(pearson_matrix(synth), c_hat,
                                   "elementwise-l1")
        d_cont = matrix_distance(cont_corr(sim, 1000, seed + 101), c_hat,
                                 "elementwise-l1")
        d_pop = matrix_distance(cont_corr(sim, 16384, 777), c_hat,
                                "elementwise-l1")
        print(f"  lam={lam:4.1f} thresh={d_thresh:.3f} cont={d_cont:.3f} "
              f"pop16k={d_pop:.3f} epochs={len(sim.loss_history) - 1} "
              f"best={sim.snapshot_best:.4f}")
