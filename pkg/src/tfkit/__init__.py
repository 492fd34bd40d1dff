"""Numerical time-frequency toolkit.

Wave packets, the bilinear Hilbert transform and its wave-packet
representation, embedded fields over the upper half-space, tree and strip
geometry, local sizes and outer measures.
"""

from . import embedding, geometry, outer, signal, sizes, transform, wavepacket
from .embedding import *  # noqa: F401,F403
from .geometry import *  # noqa: F401,F403
from .outer import *  # noqa: F401,F403
from .signal import *  # noqa: F401,F403
from .sizes import *  # noqa: F401,F403
from .transform import *  # noqa: F401,F403
from .wavepacket import *  # noqa: F401,F403

__version__ = "0.1.0"
