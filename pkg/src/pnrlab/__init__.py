"""Monte Carlo and numerics toolkit for a multiplexed photon-number-resolving detector array."""

__version__ = "0.1.0"
