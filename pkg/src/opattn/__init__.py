"""opattn: restoring images with unknown combined distortions.

A self-contained lab: a small autodiff engine, a restoration network whose
layers blend parallel operations with input-conditioned attention weights,
distortion synthesis, training, quality metrics, and attention analysis.
"""

__version__ = "0.1.0"
