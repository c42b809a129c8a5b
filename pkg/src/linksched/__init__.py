"""Location-based D2D link scheduling with classical baselines and a
spatial-convolution neural scheduler."""

__version__ = "0.1.0"
