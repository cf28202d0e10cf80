"""
EER and HTER on hand-made score sets
====================================

Scores are spoof probabilities.  A sample is accepted as genuine when its
score is below the threshold.
"""

import numpy as np

from lbpforest.evaluation import ScoredSample, aggregate_by_group, det_curve, eer, hter

genuine = [0.1, 0.4, 0.35, 0.8]
spoof = [0.3, 0.6, 0.7, 0.9]
data = (np.array(genuine + spoof), np.array([0] * 4 + [1] * 4))

# the last row sits one ulp above the highest score, where everything is accepted
thresholds, far, frr = det_curve(data)
print(" threshold   FAR   FRR")
for t, a, r in zip(thresholds, far, frr):
    print(f"{t:10.3f} {a:5.2f} {r:5.2f}")

rate, threshold = eer(data)
print(f"EER {rate:.3f} at threshold {threshold:.3f}")

# %%
# The threshold chosen on one set is applied unchanged to another.
test = (np.array([0.05, 0.2, 0.5, 0.65, 0.75, 0.95]), np.array([0, 0, 0, 1, 1, 1]))
print("HTER on the test set:", hter(data, test))

# %%
# Frames of one video can be averaged before scoring.
frames = [ScoredSample(0.2, "genuine", "v1"), ScoredSample(0.4, "genuine", "v1"), ScoredSample(0.9, "spoof", "v2")]
for s in aggregate_by_group(frames):
    print(s.group, s.label.name, round(s.score, 3))
