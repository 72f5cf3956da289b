# modules/__init__.py

"""
Pose algebra, rasters, rendering, matching, refinement/tracking, synthesis and evaluation.
"""
