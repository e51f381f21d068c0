"""Scratch: does reverse-validation (score the synth-trained classifier on
the last SOURCE domain) separate rotated seeds from reshaped ones?"""
import time
from dataclasses import replace

import numpy as np

from driftsim import simulator as sm
from driftsim.correlation import pearson_matrix
from driftsim.datasets import make_moons_stream, fit_apply_normalization
from driftsim.harness import DownstreamConfig, train_downstream, evaluate
from driftsim.predictor import PredictorConfig, predict_next, train_predictor
from driftsim.simulator import SimulatorConfig, sample

STREAM = make_moons_stream(noise_std=0.15, seed=0)
NORM, STATS = fit_apply_normalization(STREAM, "minmax")


def pair(seed, sim_cfg):
    sources = NORM.sources
    mats = [pearson_matrix(s) for s in sources]
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    sim = sm.train_simulator(sources[-1], c_hat, replace(sim_cfg, seed=seed))
    synth = sample(sim, NORM.target.n, seed=seed + 101)
    down = train_downstream(synth, replace(DownstreamConfig(), seed=seed))
    fwd = evaluate(down, NORM.target, STATS)
    rev = evaluate(down, sources[-1], STATS)
    return fwd, rev


def grid(tag, sim_cfg):
    t0 = time.time()
    rows = [pair(s, sim_cfg) for s in range(5)]
    fwd = [round(f, 1) for f, _ in rows]
    rev = [round(r, 1) for _, r in rows]
    print(f"{tag}: fwd={fwd} rev={rev} mean_fwd={np.mean([f for f, _ in rows]):.2f}"
          f" t={time.time() - t0:.0f}s", flush=True)


BASE = SimulatorConfig()  # latent8 ov0.05 draws256 warm200 patience300

grid("latent8 base", BASE)
grid("latent6", replace(BASE, latent_dim=6))
grid("ov0.02 latent8", replace(BASE, obs_variance=0.02))
grid("draws512 latent8", replace(BASE, regularizer_draws=512))
grid("warm300 latent8", replace(BASE, warmup_epochs=300))
