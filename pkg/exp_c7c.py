import numpy as np
from driftsim import autodiff as ad
from driftsim import simulator as sm
from driftsim.predictor import (PredictorConfig, _forward_sequence,
                                _init_params, _step_loss_graph)
from driftsim.simulator import SimulatorConfig
from driftsim.correlation import flatten_upper, pearson_matrix
from driftsim.datasets import DomainDataset, CLASSIFICATION


def pred_instance(rng):
    m = int(rng.integers(2, 5))
    t_len = int(rng.integers(3, 6))
    config = PredictorConfig(layers=int(rng.integers(1, 3)),
                             latent_dim=int(rng.integers(2, 5)),
                             hidden_dim=int(rng.integers(3, 7)))
    params = _init_params(m, config, rng)
    mats = []
    for _ in range(t_len):
        x = rng.standard_normal((16, m))
        mats.append(pearson_matrix(DomainDataset(0, x[:, :m - 1], x[:, m - 1],
                                                 task="regression")))
    inputs = np.stack([flatten_upper(c) for c in mats[:-1]])
    targets = np.stack([flatten_upper(c) for c in mats[1:]])

    def build(ps, ins):
        seq, tgt = ins
        rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
        outs = _forward_sequence(ps, rows, config.layers, config.hidden_dim)
        loss = None
        for s, out in enumerate(outs):
            term = _step_loss_graph(out, tgt[s:s + 1, :], m, config.lambda_ce)
            loss = term if loss is None else loss + term
        return loss
    return build, params, [inputs, targets], (m, t_len, config.layers)


def sim_instance(rng):
    m = int(rng.integers(2, 5))
    config = SimulatorConfig(encoder_dim=int(rng.integers(3, 7)),
                             encoder_layers=int(rng.integers(1, 3)),
                             decoder_dim=int(rng.integers(3, 7)),
                             decoder_layers=int(rng.integers(1, 3)),
                             latent_dim=int(rng.integers(2, 4)),
                             batch_size=8, regularizer_draws=8)
    params = sm._init_params(m, config, rng)
    rows = rng.uniform(-0.9, 0.9, (8, m))
    noise = rng.standard_normal((8, config.latent_dim))
    z = rng.standard_normal((8, config.latent_dim))
    x = rng.standard_normal((24, m))
    target = pearson_matrix(DomainDataset(0, x[:, :m - 1], x[:, m - 1],
                                          task="regression")).entries

    def build(ps, ins):
        loss = sm._neg_elbo_graph(ps, config, ins[0], ins[1], CLASSIFICATION)
        gen = sm._decode(ps, config, ins[2], CLASSIFICATION)
        return loss + sm._regularizer_graph(gen, ins[3]) * config.lambda_c
    return build, params, [rows, noise, z, target], (m,)


for name, gen in (("pred", pred_instance), ("sim", sim_instance)):
    rng = np.random.default_rng(7)
    stats = []
    for k in range(50):
        build, params, inputs, meta = gen(rng)
        graph = ad.ComputeGraph(build)
        loss, grads = ad.evaluate_with_gradients(graph, params, inputs)
        gmin = min(np.min(np.abs(g)) for g in grads)
        err = ad.grad_check(graph, params, inputs)
        stats.append((k, loss, gmin, err, meta))
    fails = [s for s in stats if s[3] >= 1e-4]
    small = [s for s in stats if s[2] < 1e-4]
    print(f"{name}: {len(fails)} fail, {len(small)} have min|g|<1e-4")
    for s in sorted(stats, key=lambda s: -s[3])[:8]:
        print(f"  k={s[0]:2d} loss={s[1]:8.3f} min|g|={s[2]:.2e} "
              f"err={s[3]:.2e} meta={s[4]}")
