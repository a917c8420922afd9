"""Random Forest two-sample tests and the simulation studies around them."""

__version__ = "0.1.0"
