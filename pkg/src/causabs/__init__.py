"""Finite causal and quantum compositional models, their queries, and abstraction checkers."""

from .stoch import Channel, FinVar
from .model import CausalModel, FunctionalCausalModel, Intervention

__all__ = ["Channel", "FinVar", "CausalModel", "FunctionalCausalModel", "Intervention"]
