"""
Structural Complexity Toolkit - Spectral Package

Perturbation, truncated SVD, correction metrics and per-rating scoring
"""
