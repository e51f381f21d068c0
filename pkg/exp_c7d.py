import numpy as np
from driftsim import autodiff as ad
from driftsim.predictor import (PredictorConfig, _forward_sequence,
                                _init_params, _step_loss_graph)
from driftsim.correlation import flatten_upper, pearson_matrix
from driftsim.datasets import DomainDataset


def gen_instance(rng):
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
    return m, t_len, config, params, inputs, targets


rng = np.random.default_rng(7)
insts = [gen_instance(rng) for _ in range(50)]
for k in (20, 31, 38, 13):
    m, t_len, config, params, inputs, targets = insts[k]
    p = m * (m - 1) // 2
    h, lat = config.hidden_dim, config.latent_dim

    def build(ps, ins, t_len=t_len, config=config, m=m):
        seq, tgt = ins
        rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
        outs = _forward_sequence(ps, rows, config.layers, config.hidden_dim)
        loss = None
        for s, out in enumerate(outs):
            term = _step_loss_graph(out, tgt[s:s + 1, :], m, config.lambda_ce)
            loss = term if loss is None else loss + term
        return loss

    loss, grads = ad.evaluate_with_gradients(ad.ComputeGraph(build), params,
                                             [inputs, targets])
    print(f"k={k} m={m} t_len={t_len} layers={config.layers} "
          f"h={h} lat={lat} p={p} loss={loss:.2f}")
    names = ["w_embed", "b_embed"]
    for l in range(config.layers):
        names += [f"w_l{l}", f"b_l{l}"]
    names += ["w_head", "b_head"]
    # smallest five |gradient| entries with coordinates
    entries = []
    for i, g in enumerate(grads):
        for idx in np.ndindex(g.shape):
            entries.append((abs(g[idx]), names[i], idx, g.shape))
    entries.sort()
    for mag, nm, idx, shape in entries[:5]:
        print(f"   |g|={mag:.2e} {nm}{list(idx)} shape={shape}")
