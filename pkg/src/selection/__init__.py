"""
Structural Complexity Toolkit - Selection Package

Stratified training-subset strategies, RPA and correlation analysis
"""
