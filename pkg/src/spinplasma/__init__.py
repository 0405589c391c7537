"""Semi-relativistic spin-1/2 quantum plasma kinetics."""

__version__ = "0.1.0"
