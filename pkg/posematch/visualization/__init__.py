# visualization/__init__.py
"""
Visualization and export components for posematch
"""
