"""Acoustic-to-articulatory inversion toolkit.

Signal preprocessing, articulatory kinematics, feature/embedding file
formats, a speaker-conditioned BLSTM regressor with exact-gradient
training, experiment protocols, and correlation-based reporting.
"""

__version__ = "0.1.0"
