"""Retrieval-augmented visuo-tactile pipeline on synthetic embeddings."""

__version__ = "0.1.0"
