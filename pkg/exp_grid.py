"""Grid cell: coda + lambda matrix for (snapshot_draws, regularizer_draws)."""
import sys
import time
from dataclasses import replace

from driftsim import simulator as sm
from driftsim.correlation import matrix_distance, pearson_matrix
from driftsim.datasets import fit_apply_normalization, make_moons_stream
from driftsim.harness import ExperimentConfig, run_experiment
from driftsim.predictor import PredictorConfig, predict_next, train_predictor
from driftsim.simulator import SimulatorConfig, sample, train_simulator

snap_draws, reg_draws = int(sys.argv[1]), int(sys.argv[2])
warmup = int(sys.argv[3]) if len(sys.argv) > 3 else SimulatorConfig().warmup_epochs
obs_var = float(sys.argv[4]) if len(sys.argv) > 4 else SimulatorConfig().obs_variance
sm.SNAPSHOT_DRAWS = snap_draws
sim_base = replace(SimulatorConfig(), regularizer_draws=reg_draws,
                   warmup_epochs=warmup, obs_variance=obs_var)
tag = f"[snap{snap_draws}/draws{reg_draws}/warm{warmup}/ov{obs_var}]"

t0 = time.time()
stream = make_moons_stream()
config = ExperimentConfig(seeds=(0, 1, 2, 3, 4), simulator=sim_base)
rep = run_experiment(stream, "coda", config)
print(f"{tag} coda: mean={rep.mean:.2f} "
      f"vals={[round(v, 1) for v in rep.seed_values]} "
      f"t={time.time() - t0:.0f}s", flush=True)

normalized, _ = fit_apply_normalization(stream, "minmax")
mats = [pearson_matrix(s) for s in normalized.sources]
majority = 0
for seed in range(5):
    model = train_predictor(mats, PredictorConfig(seed=seed))
    c_hat = predict_next(model, mats)
    dists = []
    for lam in (0.0, 1.0, 10.0):
        sim = train_simulator(normalized.sources[-1],
                              None if lam == 0.0 else c_hat,
                              replace(sim_base, seed=seed, lambda_c=lam))
        synth = sample(sim, 1000, seed=seed + 101)
        dists.append(matrix_distance(pearson_matrix(synth), c_hat,
                                     "elementwise-l1"))
    ok = dists[0] >= dists[1] >= dists[2]
    majority += ok
    print(f"{tag}   seed {seed}: "
          f"{[round(d, 3) for d in dists]} ok={ok}", flush=True)
print(f"{tag} mono {majority}/5 "
      f"total t={time.time() - t0:.0f}s")
