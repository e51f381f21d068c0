import numpy as np
from driftsim import autodiff as ad
from driftsim.predictor import (PredictorConfig, _forward_sequence,
                                _init_params, _step_loss_graph)
from driftsim.correlation import flatten_upper, pearson_matrix
from driftsim.datasets import DomainDataset

KINK_GAP = 1e-3
GRAD_FLOOR = 1e-3

rng = np.random.default_rng(7)
rejected_kink = rejected_dead = 0
errs = []
losses = []
mins = []
for _ in range(50):
    for _ in range(100):
        m = int(rng.integers(2, 5))
        t_len = int(rng.integers(3, 6))
        config = PredictorConfig(layers=int(rng.integers(1, 3)),
                                 latent_dim=int(rng.integers(2, 5)),
                                 hidden_dim=int(rng.integers(3, 7)))
        shapes = [p.shape for p in _init_params(m, config, rng)]
        params = [rng.normal(0.0, 0.8, s) for s in shapes]
        mats = []
        for _ in range(t_len):
            x = rng.standard_normal((16, m))
            mats.append(pearson_matrix(DomainDataset(0, x[:, :m - 1],
                                                     x[:, m - 1],
                                                     task="regression")))
        inputs = np.stack([flatten_upper(c) for c in mats[:-1]])
        targets = np.stack([flatten_upper(c) for c in mats[1:]])

        def build(ps, ins, t_len=t_len, config=config, m=m):
            seq, tgt = ins
            rows = [seq[s:s + 1, :] for s in range(t_len - 1)]
            outs = _forward_sequence(ps, rows, config.layers,
                                     config.hidden_dim)
            loss = None
            for s, out in enumerate(outs):
                term = _step_loss_graph(out, tgt[s:s + 1, :], m,
                                        config.lambda_ce)
                loss = term if loss is None else loss + term
            return loss

        outs = _forward_sequence([ad.constant(p) for p in params],
                                 [ad.constant(inputs[s:s + 1, :])
                                  for s in range(t_len - 1)],
                                 config.layers, config.hidden_dim)
        gap = min(np.min(np.abs(out.value - targets[s:s + 1, :]))
                  for s, out in enumerate(outs))
        if gap < KINK_GAP:
            rejected_kink += 1
            continue
        graph = ad.ComputeGraph(build)
        loss, grads = ad.evaluate_with_gradients(graph, params,
                                                 [inputs, targets])
        gmin = min(np.min(np.abs(g)) for g in grads)
        if gmin < GRAD_FLOOR:
            rejected_dead += 1
            continue
        errs.append(ad.grad_check(graph, params, [inputs, targets]))
        losses.append(loss)
        mins.append(gmin)
        break
    else:
        raise AssertionError("exhausted")

print(f"rejections: kink {rejected_kink}, dead {rejected_dead}")
print(f"loss range [{min(losses):.1f}, {max(losses):.1f}]")
print(f"min|g| range [{min(mins):.2e}, {max(mins):.2e}]")
print(f"worst err {max(errs):.3e}  (gate 1e-4)")
print("top five:", sorted(np.round(errs, 7))[-5:])
