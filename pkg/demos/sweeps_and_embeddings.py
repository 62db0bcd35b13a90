"""
Sweeps and embedding export
===========================

How much unlabeled target data does adaptation need, and how sensitive is
it to the bottleneck width? Afterwards we look at classifier-layer
activations, the same ones ``caada export-embeddings`` writes to CSV.
"""

import numpy as np

from caada import TrainConfig, run_sweep, train_da
from caada.model import embed
from caada.tasks import da_task
from caada.trainer import results_csv

config = TrainConfig.desk()
source, target = da_task(seed=1)

# The target is subsampled per class before training; evaluation always
# uses the full target set.
rows = run_sweep(config, "target_fraction", [0.2, 0.4, 0.6, 0.8, 1.0], source, target,
                 seeds=[1, 2, 3])
print(results_csv(rows))

rows = run_sweep(config, "bottleneck_dim", [8, 16, 32], source, target, seeds=[1, 2, 3])
print(results_csv(rows))

# Classifier-layer embeddings, where the correlation term acts. Distances
# between matching source and target class centroids are divided by the
# source class separation; the adapted model pulls the classes together,
# the source-only model leaves them apart.
ys, yt = source.labels("eval"), target.labels("eval")
for name, cfg in (("adapted", config), ("source only", config.with_(gamma=0.0, sigma=0.0))):
    model, _ = train_da(cfg, source, target, evaluate_target=False)
    z_s = embed(model, source.features, "fc8", extractor=model.source_extractor)
    z_t = embed(model, target.features, "fc8")
    scale = np.linalg.norm(z_s[ys == 0].mean(0) - z_s[ys == 1].mean(0))
    gaps = [np.linalg.norm(z_s[ys == k].mean(0) - z_t[yt == k].mean(0)) / scale for k in (0, 1)]
    print(f"{name:12s} relative centroid gaps: {gaps[0]:.3f}, {gaps[1]:.3f}")
