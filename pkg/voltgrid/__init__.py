"""
VoltGrid: two-timescale voltage regulation for radial distribution feeders.

Capacitor banks are committed once per interval by a deep Q-network; smart
inverter reactive setpoints are optimized every slot over a linearized or
SOCP-relaxed branch flow model.
"""
from voltgrid.config import ARTIFACT_VERSION

__version__ = ARTIFACT_VERSION
