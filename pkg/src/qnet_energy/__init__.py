"""Energy cost model for quantum key distribution and conference key agreement networks."""

__version__ = "0.1.0"
