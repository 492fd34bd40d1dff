"""Greedy tree selection on a sampled field, then counting-function refinement.

Run with ``python3 demos/03_tree_selection.py``.
"""

import numpy as np

from tfkit import SampledSignal
from tfkit.embedding import embed
from tfkit.geometry import counting_function
from tfkit.outer import OuterSpec, field_point_cloud, greedy_cover, refine_to_linfty
from tfkit.wavepacket import make_mother_packet

n, dx = 256, 0.25
L = n * dx
rng = np.random.default_rng(2)
ks = rng.choice(np.arange(-32, 33), 6, replace=False)
f = SampledSignal.from_spectrum(ks / L, rng.normal(size=6) + 1j * rng.normal(size=6), n, dx)
F = embed(f, None, make_mother_packet(0.25))

# Sample |F| on a box of the upper half space; each point carries a mass.
cloud = field_point_cloud(F, (-4, 4), (-16, 16), (0.03, 0.5), n=(64, 96, 12))
spec = OuterSpec(band=(-4.5, 4.5), scales=(0.125, 0.25, 0.5), x_range=(-16, 16), xi_range=(-5, 5),
                 xi_step=0.25)

for lam in (0.3, 0.1, 0.03):
    res = greedy_cover(cloud, lam, spec=spec)
    print(f"lambda {lam}: {len(res.selected)} trees, measure {res.measure_estimate:.2f}, "
          f"residual {res.residual_size:.3f}", res.postconditions())

# Overlapping tops can be thinned so that the counting function stays bounded.
trees = res.selected
cf = counting_function(trees)
print(f"counting function: L1 {cf.L1:.2f}, Linf {cf.Linf:.0f}")
ref = refine_to_linfty(trees, 2.0, 2.0)
print(f"after refinement: {len(ref.forest)} trees, {len(ref.strips)} strips, checks {ref.checks}")
