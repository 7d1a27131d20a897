"""Self-supervised hyperspherical graph embeddings.

Neighbor-mean alignment on the unit sphere, a mean-norm uniformity
penalty, and an entropy-guided controller that balances the two during
training. Pure numpy with optional numba-accelerated kernels.
"""

__version__ = "0.1.0"
