"""Bound-pair bands and driven dynamics of two bosons in the extended Bose-Hubbard chain."""

from .model import FieldProtocol, ModelParams, PairBasis

__version__ = "0.1.0"

__all__ = ["FieldProtocol", "ModelParams", "PairBasis", "__version__"]
