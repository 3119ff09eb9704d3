"""Physics-enhanced residual learning for car-following trajectory prediction."""

__version__ = "0.1.0"
