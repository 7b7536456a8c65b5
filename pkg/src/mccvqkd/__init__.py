"""Multi-carrier CV-QKD key-rate, noise, optimization and DSP simulation toolkit."""

__version__ = "0.1.0"
