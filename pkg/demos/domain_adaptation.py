"""
Adapting to a rotated target domain
===================================

A two-class Gaussian mixture is rotated by 50 degrees and shifted. A model
trained only on the labeled source loses much of its accuracy on the target.
Adding the adversarial and correlation-alignment terms recovers most of it.
"""

import numpy as np

from caada import TrainConfig, run_ablation, train_da
from caada.tasks import da_task

source, target = da_task(seed=0)
print(f"source {source.features.shape}, target {target.features.shape}")

# One run with the default weights (gamma = sigma = 0.1). The history holds
# epoch-mean losses. The discrepancy term starts near zero because both
# extractors share their initial weights and the classifier head starts tiny.
config = TrainConfig.desk(seed=0)
model, history = train_da(config, source, target)
for rec in history[::10] + [history[-1]]:
    print(f"epoch {rec.epoch:2d}  L_c {rec.loss_classification:.3f}  "
          f"L_adv {rec.loss_adversarial:.3f}  L_dm {rec.loss_discrepancy:.4f}  "
          f"target acc {rec.target_accuracy:.3f}")

# Training never looked at target labels; only evaluation did.
print("target label reads:", dict(target.label_reads))

# The four ablation modes, averaged over five seeds.
acc = {}
for seed in range(5):
    s, t = da_task(seed)
    for row in run_ablation(config.with_(seed=seed), s, t, seeds=[seed]):
        acc.setdefault(row.key, []).append(row.accuracies[0])
for mode, values in acc.items():
    print(f"{mode:17s} {np.mean(values):.3f} +- {np.std(values):.3f}")
