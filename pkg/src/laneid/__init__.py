"""Lane ID estimation: ego-lane index from both road edges with recurrent encoder-decoder networks."""

__version__ = "1.0.0"

__all__ = ["__version__"]
