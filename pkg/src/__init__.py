"""
Structural Complexity Toolkit

Spectral perturbation analysis of recommender interaction datasets
"""

__version__ = "0.1.0"
