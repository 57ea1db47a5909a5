"""Statistical learning on homomorphically encrypted integers."""

__version__ = "0.1.0"
