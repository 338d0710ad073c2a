"""
Isoradial Heat

Isoradial planar graphs, their geometric Laplacians and certified heat
kernels, with sweeps of the short-time scaling regimes.
"""

from .cli import main
