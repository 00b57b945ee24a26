"""
Structural Complexity Toolkit - Utility Functions
"""
