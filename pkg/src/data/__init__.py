"""
Structural Complexity Toolkit - Data Package

Interaction parsing, sparse matrices, caches and dataset subsampling
"""
