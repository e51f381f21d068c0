"""Scratch: does ramping the regularizer weight after warmup kill the
per-seed reshape failure? Prints one row per config."""
import copy
import sys
import time
from dataclasses import replace

import numpy as np

from driftsim import autodiff as ad
from driftsim import simulator as sm
from driftsim.correlation import pearson_matrix
from driftsim.datasets import make_moons_stream, fit_apply_normalization
from driftsim.harness import DownstreamConfig, train_downstream, evaluate
from driftsim.optim import Adam
from driftsim.predictor import PredictorConfig, predict_next, train_predictor
from driftsim.simulator import SimulatorConfig, loss_snapshot, sample


def train_ramp(last_domain, target_corr, config, ramp_epochs):
    m = last_domain.d + 1
    data = np.column_stack([last_domain.features, last_domain.labels])
    rng = np.random.default_rng(config.seed)
    params = sm._init_params(m, config, rng)
    snapshot_init = loss_snapshot(params, data, target_corr, config,
                                  last_domain.task, config.seed)
    warmup = config.warmup_epochs
    lam_box = [0.0]

    def build_plain(ps, ins):
        return sm._neg_elbo_graph(ps, config, ins[0], ins[1], last_domain.task)

    def build_full(ps, ins):
        loss = sm._neg_elbo_graph(ps, config, ins[0], ins[1], last_domain.task)
        gen = sm._decode(ps, config, ins[2], last_domain.task)
        return loss + sm._regularizer_graph(gen, ins[3]) * lam_box[0]

    graph_plain = ad.ComputeGraph(build_plain)
    graph_full = ad.ComputeGraph(build_full)
    opt = Adam([p.shape for p in params], lr=config.learning_rate)
    n = data.shape[0]
    best_loss = snapshot_init
    best_params = copy.deepcopy(params)
    stale = 0
    settle = warmup + ramp_epochs
    for epoch in range(config.max_epochs):
        if epoch < warmup:
            lam_box[0] = 0.0
        else:
            lam_box[0] = config.lambda_c * min(1.0, (epoch - warmup + 1) / ramp_epochs)
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = data[perm[start:start + config.batch_size]]
            noise = rng.standard_normal((rows.shape[0], config.latent_dim))
            if lam_box[0] > 0:
                z = rng.standard_normal((config.regularizer_draws, config.latent_dim))
                _, grads = ad.evaluate_with_gradients(
                    graph_full, params, [rows, noise, z, target_corr.entries])
            else:
                _, grads = ad.evaluate_with_gradients(graph_plain, params,
                                                      [rows, noise])
            opt.step(params, grads)
        snap = loss_snapshot(params, data, target_corr, config,
                             last_domain.task, config.seed)
        if snap < best_loss - config.tol:
            best_loss, best_params, stale = snap, copy.deepcopy(params), 0
        elif epoch >= settle:
            stale += 1
            if stale >= config.patience:
                break
    return sm.SimulatorModel(m=m, task=last_domain.task, config=config,
                             params=best_params,
                             trained_on_index=last_domain.domain_index,
                             loss_history=[], snapshot_init=snapshot_init,
                             snapshot_best=best_loss)


STREAM = make_moons_stream(noise_std=0.15, seed=0)
NORM, STATS = fit_apply_normalization(STREAM, "minmax")


def coda_mce(seed, sim_cfg, ramp):
    sources = NORM.sources
    mats = [pearson_matrix(s) for s in sources]
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    cfg = replace(sim_cfg, seed=seed)
    if ramp > 0:
        sim = train_ramp(sources[-1], c_hat, cfg, ramp)
    else:
        sim = sm.train_simulator(sources[-1], c_hat, cfg)
    synth = sample(sim, NORM.target.n, seed=seed + 101)
    down = train_downstream(synth, replace(DownstreamConfig(), seed=seed))
    return evaluate(down, NORM.target, STATS)


def grid(tag, sim_cfg, ramp=0):
    t0 = time.time()
    vals = [coda_mce(s, sim_cfg, ramp) for s in range(5)]
    print(f"{tag}: mean={np.mean(vals):5.2f} vals={[round(v, 1) for v in vals]} "
          f"t={time.time() - t0:.0f}s", flush=True)


BASE = SimulatorConfig()  # ov 0.05, draws 256, warmup 200, patience 300, latent 8

grid("ramp300 latent8", BASE, ramp=300)
grid("ramp300 latent6", replace(BASE, latent_dim=6), ramp=300)
grid("ramp600 latent8", BASE, ramp=600)
grid("warm500 latent8", replace(BASE, warmup_epochs=500))
grid("draws1024 latent8", replace(BASE, regularizer_draws=1024), ramp=0)
