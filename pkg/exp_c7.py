import numpy as np
from driftsim import autodiff as ad
from driftsim.predictor import (PredictorConfig, _forward_sequence,
                                _init_params, _step_loss_graph)
from driftsim.correlation import flatten_upper, pearson_matrix
from driftsim.datasets import DomainDataset

KINK_GAP = 1e-3


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


def check(m, t_len, config, params, inputs, targets, mode="full"):
    def build(ps, ins):
        seq, tgt = ins
        rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
        outs = _forward_sequence(ps, rows, config.layers, config.hidden_dim)
        loss = None
        for s, out in enumerate(outs):
            if mode == "full":
                term = _step_loss_graph(out, tgt[s:s + 1, :], m,
                                        config.lambda_ce)
            elif mode == "l1":
                term = ad.reduce_sum(ad.absolute(out - tgt[s:s + 1, :]))
            elif mode == "fro":
                d = out - tgt[s:s + 1, :]
                term = ad.sqrt(ad.reduce_sum(d * d) * 2.0 + 1e-24)
            elif mode == "bce":
                q = ad.clip((out + 1.0) * 0.5, 1e-6, 1.0 - 1e-6)
                p01 = (tgt[s:s + 1, :] + 1.0) * 0.5
                term = ad.reduce_sum(-(p01 * ad.log(q)
                                       + (1.0 - p01) * ad.log(1.0 - q)))
            elif mode == "sum":
                term = ad.reduce_sum(out)
            loss = term if loss is None else loss + term
        return loss
    return ad.grad_check(ad.ComputeGraph(build), params, [inputs, targets])


rng = np.random.default_rng(7)
insts = [gen_instance(rng) for _ in range(50)]
errs = [check(*inst) for inst in insts]
worst = int(np.argmax(errs))
print("worst idx", worst, "err", errs[worst])
inst = insts[worst]
m, t_len, config, params, inputs, targets = inst
print("m", m, "t_len", t_len, "layers", config.layers,
      "latent", config.latent_dim, "hidden", config.hidden_dim)
for mode in ("full", "l1", "fro", "bce", "sum"):
    print(mode, check(*inst, mode=mode))
outs = _forward_sequence([ad.constant(p) for p in params],
                         [ad.constant(inputs[s:s + 1, :])
                          for s in range(t_len - 1)],
                         config.layers, config.hidden_dim)
for s, out in enumerate(outs):
    print("step", s, "out", np.round(out.value, 6),
          "gap", np.min(np.abs(out.value - targets[s:s + 1, :])))
