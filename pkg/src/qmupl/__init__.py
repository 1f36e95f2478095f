"""Non-Markovian position-localization collapse dynamics for a free particle."""
__version__ = "0.1.0"
