"""Multi-view course embeddings from typed heterogeneous interaction networks."""

__version__ = "0.1.0"
