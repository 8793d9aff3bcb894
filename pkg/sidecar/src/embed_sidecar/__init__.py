"""Embedding sidecar: a small HTTP service producing unit-norm text embeddings."""

__version__ = "0.1.0"
