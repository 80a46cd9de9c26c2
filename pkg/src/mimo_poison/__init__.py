"""Adversarial poisoning of pathloss regression on synthetic massive-MIMO data."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
