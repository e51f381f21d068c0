"""Scratch: verify acceptance-gated quantities on the integrated code path."""
import time
from dataclasses import replace

import numpy as np

from driftsim.correlation import CorrelationMatrix, matrix_distance, pearson_matrix
from driftsim.datasets import DomainDataset, make_moons_stream, fit_apply_normalization
from driftsim.harness import ExperimentConfig, run_experiment
from driftsim.predictor import PredictorConfig, predict_next, train_predictor
from driftsim.simulator import SimulatorConfig, sample, train_simulator

STREAM = make_moons_stream(noise_std=0.15, seed=0)
CFG = ExperimentConfig()

t0 = time.time()
coda = run_experiment(STREAM, "coda", CFG)
print(f"coda: mean={coda.mean:.2f} vals={[round(v,1) for v in coda.seed_values]} "
      f"t={coda.wall_clock_s:.0f}s", flush=True)
last = run_experiment(STREAM, "lastdomain", CFG)
print(f"lastdomain: mean={last.mean:.2f} vals={[round(v,1) for v in last.seed_values]}",
      flush=True)
abl = run_experiment(STREAM, "coda-without-C", CFG)
print(f"coda-without-C: mean={abl.mean:.2f} vals={[round(v,1) for v in abl.seed_values]} "
      f"ratio={abl.mean / coda.mean:.2f}", flush=True)
prelim = run_experiment(STREAM, "prelim", CFG)
print(f"prelim: mean={prelim.mean:.2f} vals={[round(v,1) for v in prelim.seed_values]} "
      f"majority_worse={sum(p > c for p, c in zip(prelim.seed_values, coda.seed_values))}/5",
      flush=True)

# criterion 4: forecast beats persistence per seed
NORM, _ = fit_apply_normalization(STREAM, "minmax")
mats = [pearson_matrix(s) for s in NORM.sources]
truth = pearson_matrix(NORM.target)
persist = matrix_distance(mats[-1], truth, "elementwise-l1")
wins = 0
for seed in range(5):
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    err = matrix_distance(c_hat, truth, "elementwise-l1")
    wins += err < persist
    print(f"  predictor seed {seed}: err={err:.3f} vs persistence {persist:.3f}",
          flush=True)
print(f"predictor wins {wins}/5", flush=True)

# criterion 8: lambda in {0,1,10} -> ||C_G - C_hat||_1 of 1000 draws non-increasing
t1 = time.time()
majority = 0
for seed in range(5):
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    dists = []
    for lam in (0.0, 1.0, 10.0):
        sim = train_simulator(NORM.sources[-1],
                              None if lam == 0 else c_hat,
                              replace(CFG.simulator, seed=seed, lambda_c=lam))
        synth = sample(sim, 1000, seed=seed + 101)
        mat = pearson_matrix(synth)
        dists.append(matrix_distance(mat, c_hat, "elementwise-l1"))
    ok = dists[0] >= dists[1] >= dists[2]
    majority += ok
    print(f"  lambda mono seed {seed}: {[round(d,3) for d in dists]} ok={ok}",
          flush=True)
print(f"lambda monotone {majority}/5, t={time.time() - t1:.0f}s", flush=True)
print(f"total t={time.time() - t0:.0f}s", flush=True)
