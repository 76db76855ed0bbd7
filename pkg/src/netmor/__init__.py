"""Structure-preserving model reduction for gas flow on pipe networks."""
__version__ = "0.1.0"
