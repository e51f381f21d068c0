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
m, t_len, config, params, inputs, targets = insts[20]


def build(ps, ins):
    seq, tgt = ins
    rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
    outs = _forward_sequence(ps, rows, config.layers, config.hidden_dim)
    loss = None
    for s, out in enumerate(outs):
        term = _step_loss_graph(out, tgt[s:s + 1, :], m, config.lambda_ce)
        loss = term if loss is None else loss + term
    return loss


graph = ad.ComputeGraph(build)
loss, grads = ad.evaluate_with_gradients(graph, params, [inputs, targets])
print("loss value", loss)
gmax = max(np.max(np.abs(g)) for g in grads)
gmin = min(np.min(np.abs(g)) for g in grads)
print("grad |max|", gmax, "|min|", gmin)

# locate worst component at step 1e-6 manually, then rescan with other steps
for step in (1e-5, 1e-6, 1e-7):
    worst = (0.0, None, 0.0, 0.0)
    for i, p in enumerate(params):
        flat = p.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = ad.evaluate_value(graph, params, [inputs, targets])
            flat[j] = orig - step
            dn = ad.evaluate_value(graph, params, [inputs, targets])
            flat[j] = orig
            fd = (up - dn) / (2 * step)
            a = grads[i].ravel()[j]
            rel = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
            if rel > worst[0]:
                worst = (rel, (i, j), a, fd)
    print(f"step {step:.0e}: worst rel {worst[0]:.3e} at {worst[1]} "
          f"analytic {worst[2]:.3e} fd {worst[3]:.3e} "
          f"absdiff {abs(worst[2] - worst[3]):.3e}")
