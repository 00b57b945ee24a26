"""
Structural Complexity Toolkit - Engine Package

Pipeline orchestration and the command-line interface
"""
