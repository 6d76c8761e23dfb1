"""Self-supervised tracklet embeddings from temporally associated bags."""

__version__ = "0.1.0"
