"""Pseudo segmentation labels for quadrilateral-annotated scene text."""

__version__ = "0.1.0"
