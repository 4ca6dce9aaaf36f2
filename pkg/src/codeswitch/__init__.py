"""Code-switched text generation and language modelling."""

__version__ = "0.1.0"
