"""Deep Q-learning projection of the next step of multi-stage network attacks."""

__version__ = "0.1.0"
