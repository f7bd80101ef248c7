"""
Elastic distance in detail: warping, banding, and pruning
=========================================================

Shows why DTW (rather than a frame-by-frame norm) is used to compare
behaviour clips, how the Sakoe-Chiba band trades accuracy for speed, and how
the envelope lower bound certifies skips without computing the full distance.
"""

import numpy as np

import facereact as fr

rng = np.random.default_rng(0)

# --- 1. Elastic vs rigid comparison ----------------------------------------
# The same gesture performed slightly slower: hugely different frame-by-frame,
# nearly identical under warping.
t = np.linspace(0, 2 * np.pi, 60)
gesture = np.sin(t)[:, None]
slower = np.interp(np.linspace(0, 59, 75), np.arange(60), gesture[:, 0])[:, None]

rigid = float(np.abs(gesture[:, 0] - slower[:60, 0]).sum())
elastic = fr.dtw_full(gesture, slower)
print(f"rigid frame-by-frame L1 over the shared prefix: {rigid:7.3f}")
print(f"elastic DTW distance (unequal lengths allowed): {elastic:7.3f}\n")

# --- 2. The Sakoe-Chiba band -------------------------------------------------
# A wider band explores more alignments: the distance can only shrink, and
# once the band covers the whole grid it equals the exact value.
x = rng.standard_normal((50, 5))
y = rng.standard_normal((60, 5))
exact = fr.dtw_full(x, y)
print("band radius -> banded distance (exact = %.4f)" % exact)
for radius in (0, 2, 5, 10, 25, 60):
    banded = fr.dtw_banded(x, y, fr.DtwConfig(band_radius=radius))
    print(f"  r={radius:>3}  distance={banded.distance:9.4f}")
print()

# --- 3. Lower-bound pruning ---------------------------------------------------
# lb_keogh never exceeds the banded DTW, so a bound above a cutoff proves the
# pair can be skipped. Behaviour signals are smooth, which keeps the envelopes
# tight; count how many pairs a cutoff certifies as skippable.
def smooth_walk(offset):
    steps = rng.standard_normal((40, 5))
    walk = np.empty_like(steps)
    walk[0] = steps[0]
    for k in range(1, 40):
        walk[k] = 0.95 * walk[k - 1] + 0.1 * steps[k]
    return walk + offset


pairs = [(smooth_walk(0.0), smooth_walk(rng.uniform(0, 3))) for _ in range(200)]
distances = [fr.dtw_banded(a, b, fr.DtwConfig(band_radius=5)).distance for a, b in pairs]
cutoff = float(np.percentile(distances, 25))  # keep only the closest quarter
pruned = sum(1 for a, b in pairs if fr.lb_keogh(a, b, 5) > cutoff)
print(f"cutoff at the 25th percentile of banded distances: {cutoff:.3f}")
print(f"pairs certified skippable by the envelope bound alone: {pruned}/200\n")

# --- 4. Early abandoning -------------------------------------------------------
# With a cutoff, the row-wise DP stops as soon as no cell can stay below it,
# returning a certified lower bound instead of the full distance.
far = int(np.argmax(distances))
res = fr.dtw_banded(*pairs[far], fr.DtwConfig(band_radius=5, early_abandon_cutoff=cutoff))
kind = "exact distance" if res.exact else "certified lower bound"
print(f"most distant pair under the cutoff search: {res.distance:.3f} ({kind})\n")

# --- 5. Similarity scaling ------------------------------------------------------
# Corpus-level scores map distances into [0, 1] against the corpus maximum.
max_dtw = max(distances)
for d in (0.0, max_dtw / 4, max_dtw / 2, max_dtw):
    print(f"  sim(distance={d:8.3f}) = {fr.sim(d, max_dtw):.3f}")
