# posematch/__init__.py

"""
posematch: render-and-compare 6D pose estimation, refinement and tracking
with oracle pose-difference estimators.
"""

from .modules.pose_core import quat_angle_deg, untangle, entangle
from .modules.renderer import load_ply, render, canonical_views
from .modules.matcher import make_estimator, multi_view_initialize, loss_mv, loss_sv, grad_loss
from .modules.refine_track import refine, track_step, track_sequence
from .modules.eval_harness import pose_error, accuracy, run_estimation_benchmark, run_tracking_benchmark

__version__ = '1.0.0'

__all__ = [
    'quat_angle_deg',
    'untangle',
    'entangle',
    'load_ply',
    'render',
    'canonical_views',
    'make_estimator',
    'multi_view_initialize',
    'loss_mv',
    'loss_sv',
    'grad_loss',
    'refine',
    'track_step',
    'track_sequence',
    'pose_error',
    'accuracy',
    'run_estimation_benchmark',
    'run_tracking_benchmark',
]
