"""Model-free guided value-iteration pitch controller with a surrogate wing plant."""

__version__ = "0.1.0"
