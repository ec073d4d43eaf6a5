"""Private inference for sum-product networks via garbled circuits."""

__version__ = "0.1.0"
