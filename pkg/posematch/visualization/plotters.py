# visualization/plotters.py

"""
Funções de plotagem para renders, traços de refinamento, tracking e precisão.
As funções desenham em eixos fornecidos pelo chamador; plot_canonical_views cria sua própria grade.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from matplotlib.figure import Figure

from posematch.config import PLOT_STYLES
from posematch.core.model import RenderOutput

logger = logging.getLogger(__name__)


def plot_canonical_views(renders: Sequence[RenderOutput], names: Optional[Sequence[str]] = None) -> Figure:
    """
    Grid of the six canonical renders, RGB on top and mask below.

    Args:
        renders: RenderOutput per canonical view
        names: Optional titles, one per view

    Returns:
        Figure with a 2 x len(renders) grid
    """
    fig = Figure(figsize=PLOT_STYLES['views']['figsize'])
    n = len(renders)
    if n == 0:
        logger.warning("No renders to plot")
        return fig
    axes = fig.subplots(2, n, squeeze=False)
    for i, out in enumerate(renders):
        axes[0][i].imshow(out.rgb.pixels)
        axes[1][i].imshow(out.mask.bits, cmap='gray')
        axes[0][i].set_title(names[i] if names else f"view {i}")
        for ax in (axes[0][i], axes[1][i]):
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    return fig


def plot_refinement_trace(ax, theta_hats: Sequence[float], true_errors: Optional[Sequence[float]] = None,
                          t_ref_deg: Optional[float] = None):
    """
    Estimated (and optionally true) angle distance per refinement iteration.

    Args:
        ax: Matplotlib axis
        theta_hats: theta_hat per recorded step
        true_errors: True rotation error per step, when known
        t_ref_deg: Convergence threshold drawn as a horizontal line
    """
    if len(theta_hats) == 0:
        ax.text(0.5, 0.5, "Empty trace", ha='center', va='center', transform=ax.transAxes)
        return
    colors = PLOT_STYLES['trace']['colors']
    steps = np.arange(len(theta_hats))
    ax.plot(steps, theta_hats, 'o-', color=colors[0], label='estimated')
    if true_errors is not None:
        ax.plot(steps, true_errors, 's--', color=colors[1], label='true', alpha=0.7)
    if t_ref_deg is not None:
        ax.axhline(t_ref_deg, color='gray', linestyle=':', label=f"T_ref = {t_ref_deg} deg")
    if min(theta_hats) > 0:
        ax.set_yscale('log')
    ax.grid(True, alpha=0.3)
    ax.set_xlabel('Iteration')
    ax.set_ylabel('Angle distance (deg)')
    ax.set_title('Refinement trace')
    ax.legend(loc='best')


def plot_tracking_errors(ax, frame_rows: List[Dict]):
    """Rotation error per frame, points colored by tracker event; injected jumps as dashed lines."""
    if not frame_rows:
        ax.text(0.5, 0.5, "No frames", ha='center', va='center', transform=ax.transAxes)
        return
    colors = PLOT_STYLES['tracking']['event_colors']
    frames = np.array([r['frame_index'] for r in frame_rows])
    errors = np.array([r['rot_err_deg'] for r in frame_rows])
    events = np.array([r['event'] for r in frame_rows])

    ax.plot(frames, errors, '-', color='lightgray', zorder=1)
    for event, color in colors.items():
        selected = events == event
        if selected.any():
            ax.scatter(frames[selected], errors[selected], color=color, label=event, s=18, zorder=2)
    for row in frame_rows:
        if row.get('discontinuity'):
            ax.axvline(row['frame_index'], color='black', linestyle='--', alpha=0.4)
    ax.grid(True, alpha=0.3)
    ax.set_xlabel('Frame')
    ax.set_ylabel('Rotation error (deg)')
    ax.set_title('Tracking error')
    ax.legend(loc='best')


def plot_accuracy(ax, accuracy: Dict[float, float], label: str = "", baselines: Sequence[dict] = ()):
    """Barras de precisão (n, n), um grupo por método."""
    ns = sorted(accuracy)
    methods = [(b.get('name', 'baseline'), {str(k): v for k, v in b.get('accuracy', {}).items()})
               for b in baselines]
    methods.append((label or 'posematch', {str(n): accuracy[n] for n in ns}))
    width = 0.8 / len(methods)
    x = np.arange(len(ns))
    for i, (name, values) in enumerate(methods):
        heights = [100.0 * values.get(str(n), np.nan) for n in ns]
        ax.bar(x + i * width, heights, width, label=name)
    ax.set_xticks(x + width * (len(methods) - 1) / 2.0)
    ax.set_xticklabels([f"({n}, {n})" for n in ns])
    ax.set_ylim(0, 100)
    ax.set_ylabel('Accuracy (%)')
    ax.set_title('(n deg, n cm) accuracy')
    ax.legend(loc='best')


def figure_with_axis(kind: str) -> tuple:
    """A figure sized from PLOT_STYLES[kind] and its single axis."""
    fig = Figure(figsize=PLOT_STYLES.get(kind, PLOT_STYLES['trace'])['figsize'])
    return fig, fig.add_subplot(111)


__all__ = [
    'plot_canonical_views', 'plot_refinement_trace', 'plot_tracking_errors', 'plot_accuracy',
    'figure_with_axis',
]
