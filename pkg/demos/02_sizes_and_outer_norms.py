"""Sizes on a tree, then an outer L^p norm built from them.

Run with ``python3 demos/02_sizes_and_outer_norms.py``.
"""

import numpy as np

from tfkit import SampledSignal
from tfkit.embedding import embed
from tfkit.geometry import Tree
from tfkit.outer import OuterSpec, atomic_decompose, outer_lp, superlevel_profile
from tfkit.sizes import Quadrature, SizeSpec, defect_size, lebesgue_size
from tfkit.wavepacket import make_mother_packet

n, dx = 64, 0.25
L = n * dx
rng = np.random.default_rng(1)
ks = np.array([-6, -1, 2, 5])
f = SampledSignal.from_spectrum(ks / L, rng.normal(size=4) + 1j * rng.normal(size=4), n, dx)
F = embed(f, None, make_mother_packet(0.25))

# A size reads the embedded field on one tree in model coordinates.
T = Tree(0.0, 0.0, 4.0, (-5.0, 5.0))
quad = Quadrature(n_theta=32, n_zeta=24, per_octave=6)
for u, v in [(2.0, np.inf), (np.inf, np.inf)]:
    print(f"L^({u},{v}) size on T:", lebesgue_size(F, T, SizeSpec(u=u, v=v, quad=quad)))

# The plain embedding has (almost) no defect: what remains is the finite difference error.
for h in (2e-3, 1e-3):
    print(f"defect with step {h}:", defect_size(F, T, SizeSpec(u=1.0, v=1.0, quad=Quadrature(32, 24, 6, h=h)), "total"))

# Superlevel measures: how much tree measure is needed to push the size below lambda.
size = SizeSpec(kind="lebesgue", u=2.0, v=np.inf)
spec = OuterSpec(band=(-1.0, 1.0))
for lam, mu, res, forest in superlevel_profile(F, size, [0.05, 0.1, 0.2, 0.4], spec):
    print(f"lambda {lam:4.2f}: measure {mu:5.1f} with {len(forest)} trees, residual {res:.3f}")

print("outer L^2 norm:", outer_lp(F, size, spec, 2.0))
print("scaled by 3:   ", outer_lp(3 * F, size, spec, 2.0))

dec = atomic_decompose(F, size, spec, p=2.0)
print(f"atomic sum {dec.weighted_sum:.3f} <= 4 * {dec.norm_p:.3f}")
