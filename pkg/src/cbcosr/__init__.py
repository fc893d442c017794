"""Open-set recognition with category-aware binary classifiers."""
__version__ = "0.1.0"
