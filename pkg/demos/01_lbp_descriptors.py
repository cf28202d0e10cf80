"""
Uniform LBP descriptors, one step at a time
===========================================

Run with ``python3 demos/01_lbp_descriptors.py``.
"""

import numpy as np

from lbpforest import synth
from lbpforest.features import LBP_GRID, Scale, extract_all_scales
from lbpforest.imagio import ColorSpace, Image, prepare
from lbpforest.lbp import LbpConfig, build_u2_map, lbp_codes, transitions

# A u2 table sends every pattern with at most two circular 0/1 transitions to its
# own bin and everything else to one shared bin.
for P in (8, 16, 24):
    table = build_u2_map(P)
    print(f"P={P:2d}: {int(table.max()) + 1} bins, {2 ** P} patterns")

patterns = np.array([0b00000000, 0b00011100, 0b01010101])
print("transitions:", transitions(patterns, 8).tolist())
print("bins       :", build_u2_map(8)[patterns].tolist())

# %%
# Codes on a real plane.  Pixels closer than R to the border get code -1.
plane = np.random.default_rng(0).integers(0, 256, (7, 7), dtype=np.uint8)
cm = lbp_codes(plane, LbpConfig(16, 2))
print("valid pixels on a 7x7 plane with R=2:", int(cm.valid.sum()))
print(cm.codes)

# %%
# A synthetic genuine face stand-in and its recaptured twin.
genuine = prepare(synth.make_image(7, subject=3, index=0, spoof=False), ColorSpace.HSV)
spoof = prepare(synth.make_image(7, subject=3, index=0, spoof=True), ColorSpace.HSV)

for name, img in (("genuine", genuine), ("spoof", spoof)):
    vecs = extract_all_scales(img)
    print(name, [v.size for v in vecs])

# Each scale is 49 windows x 3 channels x bins.  Compare the value-channel
# histograms of the central window at the finest scale.
center = len(LBP_GRID.regions()) // 2
g = extract_all_scales(genuine)[0].reshape(49, 3, Scale.S1.config.n_bins)[center, 2]
s = extract_all_scales(spoof)[0].reshape(49, 3, Scale.S1.config.n_bins)[center, 2]
print("L1 distance between central V-channel histograms:", round(float(np.abs(g - s).sum()), 3))

# %%
# Adding a constant to every channel leaves all three descriptors unchanged.
raw = synth.make_image(7, subject=3, index=1, spoof=False)
# clip first so the shifted copy cannot saturate at 255
darker = np.clip(np.asarray(raw.data).astype(int), 0, 200).astype(np.uint8)
brighter = Image(darker + np.uint8(40))
same = all(np.array_equal(a, b) for a, b in zip(extract_all_scales(Image(darker)), extract_all_scales(brighter)))
print("invariant to +40 gray shift:", same)
