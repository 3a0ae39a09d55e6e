"""
Losses, gradient checks and training
====================================

The training objective adds a reconstruction term and a neighbourhood
smoothness term for each network to the anchor matching loss. Gradients come
from a small reverse-mode engine; here they are checked against finite
differences before a short training run.
"""

import numpy as np

from graphuil.benchgen import BenchSpec, generate
from graphuil.features import FeatureInitSpec
from graphuil.msa import EncoderConfig
from graphuil.numerics import finite_diff_check
from graphuil.training import Problem, TrainConfig, init_params, train

inst = generate(BenchSpec(n=12, m=2, overlap=1.0, edge_noise=0.1, splits=(0.5, 0.25, 0.25)))
small = TrainConfig(encoder=EncoderConfig(in_dim=8, layer_dims=(8, 8, 8), att_dim=8, out_dim=8),
                    features=FeatureInitSpec(method="random", dim=8), mapper_dims=(8, 8, 8, 8))
a = inst.anchors
problem = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), small)
params = init_params(small)

total, parts, _, _ = problem.loss(params, 0)
print("loss terms at initialisation:")
for k, v in parts.items():
    print(f"  {k:<12} {float(getattr(v, 'value', v)):.4f}")
print(f"  {'weighted':<12} {float(total.value):.4f}")

# The loss is in the hundreds while some attention gradients are around 1e-8,
# so double-precision differences are dominated by rounding. The extended mode
# evaluates the loss in long double.
for precision in ("double", "extended"):
    rep = finite_diff_check(lambda p: problem.loss(p, 0)[0], params, eps=2e-5,
                            precision=precision, max_coords=64)
    print(f"{precision:>8} finite differences: max relative error {rep.max_error:.2e}")

# a short run on a moderately noisy pair of networks
inst = generate(BenchSpec(n=120, m=3, overlap=0.8, edge_noise=0.05, seed=4))
a = inst.anchors
cfg = TrainConfig(epochs=150, patience=30,
                  encoder=EncoderConfig(in_dim=32, layer_dims=(32, 32, 32), att_dim=32, out_dim=32),
                  features=FeatureInitSpec(dim=32), mapper_dims=(32, 64, 32))
model = train(inst.g1, inst.g2, a.get("train"), a.get("val"), cfg)
print(f"stopped after {len(model.history)} epochs, best epoch {model.best_epoch}")
for h in model.history[::30]:
    print(f"  epoch {h['epoch']:>3}: total {h['total']:9.2f}  match {h['match']:8.2f}  "
          f"val ratio {h['val_ratio']:.3f}")

# mapped accounts from the first network should land near their counterparts
test = a.get("test")
d = ((model.mapped1[test[:, 0], None, :] - model.emb2[None, test[:, 1], :]) ** 2).sum(-1)
hits = np.mean(np.argmin(d, 1) == np.arange(len(test)))
print(f"nearest-counterpart hit rate on {len(test)} test anchors: {hits:.2f}")
