"""Independent density estimation (IDE) workbench."""

__version__ = "0.1.0"
