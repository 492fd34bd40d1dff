"""Evaluate the bilinear Hilbert transform two ways and watch them agree.

Run with ``python3 demos/01_multiplier_and_reconstruction.py``.
"""

import numpy as np

from tfkit import SampledSignal
from tfkit.transform import TruncationRegion, c_beta, direct_bht, halfplane_multiplier, wp_representation
from tfkit.wavepacket import make_mother_packet

r, beta = 2.0**-5, 0.125
phi = make_mother_packet(r)

# The wave-packet formula is normalized by a constant obtained from the
# half-plane multiplier.  It stays of size r^2 for every beta.
for b in (1.0, 0.25, 2.0**-8):
    print(f"beta = {b:<10g} C = {c_beta(phi, b):.6f}   (r^2 = {r * r:.6f})")

# The multiplier lives on a ball of radius 2r around 1.
xt = np.linspace(1 - 3 * r, 1 + 3 * r, 13)
print("m(xi) near 1:", np.round(halfplane_multiplier(phi, beta, xt) / r, 4))

# Two band-limited inputs on 1024 nodes.
n, dx = 1024, 0.125
L = n * dx
rng = np.random.default_rng(0)
f1 = SampledSignal.from_spectrum(np.array([8, 24, 40, -16]) / L, rng.normal(size=4) + 0j, n, dx)
f2 = SampledSignal.from_spectrum(np.array([-24, 16, 48]) / L, rng.normal(size=3) + 0j, n, dx)

exact = direct_bht(f1, f2, beta).samples / (np.pi * 1j)
C = c_beta(phi, beta)
for t_range in [(0.5, 4.0), (0.1, 20.0), (0.01, 200.0)]:
    approx, tail = wp_representation(f1, f2, beta, phi, TruncationRegion((-50.0, 50.0), t_range),
                                     per_octave=256, eta_per_r=64, const=C)
    err = np.linalg.norm(approx.samples - exact) / np.linalg.norm(exact)
    print(f"scales {t_range}: relative error {err:.2e}, tail estimate {tail:.2e}")
