"""Attention-based aggregation of frame embeddings for video-to-still matching."""

__version__ = "0.1.0"
