"""Feature selection for cold-start recommenders via QUBO optimization."""

from .sparse import SparseMatrix, ZERO_EPSILON

__all__ = ["SparseMatrix", "ZERO_EPSILON"]
__version__ = "0.1.0"
