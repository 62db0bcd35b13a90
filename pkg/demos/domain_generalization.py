"""
Generalizing to an unseen rotation
==================================

Three source domains rotated by 0, 15 and 30 degrees are pooled, split
70/30 per domain, and fed as two labeled streams. The 45-degree domain is
held out completely until the final evaluation.
"""

import numpy as np

from caada import TrainConfig, evaluate, train_dg
from caada.tasks import dg_task

rows = []
for seed in range(5):
    sources, held_out = dg_task(seed)
    config = TrainConfig.desk(mode="dg", seed=seed)
    erm, _ = train_dg(config.with_(gamma=0.0, sigma=0.0), sources)
    caadg, _ = train_dg(config, sources)
    # the held-out dataset object has not been touched yet
    assert held_out.feature_reads == 0
    rows.append((evaluate(erm, held_out), evaluate(caadg, held_out)))
    print(f"seed {seed}: pooled ERM {rows[-1][0]:.3f}   aligned {rows[-1][1]:.3f}")

erm_mean, caadg_mean = np.mean(rows, axis=0)
print(f"mean: pooled ERM {erm_mean:.4f}   aligned {caadg_mean:.4f}")
