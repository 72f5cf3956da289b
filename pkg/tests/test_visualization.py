import json

import numpy as np
import pandas as pd

from posematch.core.model import Mask
from posematch.modules.camera_raster import read_pgm
from posematch.modules.renderer import CanonicalViewSet, render_views
from posematch.visualization.export import AnalysisExporter
from posematch.visualization.plotters import (
    figure_with_axis,
    plot_accuracy,
    plot_canonical_views,
    plot_refinement_trace,
    plot_tracking_errors,
)


def test_export_data_by_extension(tmp_path) -> None:
    exporter = AnalysisExporter(str(tmp_path / 'out'))
    frame = pd.DataFrame([{'n': 2, 'accuracy': np.float64(0.5)}])
    assert exporter.export_data(frame, 'report.csv')
    assert exporter.export_data({'digest': 'abc', 'values': np.arange(3)}, 'meta.json')
    assert not exporter.export_data(frame, 'report.xlsx')
    assert pd.read_csv(exporter.path('report.csv'))['accuracy'].tolist() == [0.5]
    assert json.loads((tmp_path / 'out' / 'meta.json').read_text())['values'] == [0, 1, 2]


def test_export_raster_picks_the_format(tmp_path) -> None:
    exporter = AnalysisExporter(str(tmp_path))
    bits = np.zeros((4, 6), dtype=bool)
    bits[1:3, 2:5] = True
    exporter.export_raster(Mask(bits), 'mask.pgm')
    assert np.array_equal(read_pgm(exporter.path('mask.pgm')).bits, bits)


def test_markdown_report(tmp_path) -> None:
    exporter = AnalysisExporter(str(tmp_path))
    assert exporter.export_markdown_report('Run', [
        {'title': 'Config', 'content': ['digest: abc']},
        {'title': 'Table', 'content': pd.DataFrame([{'n': 2, 'accuracy': 1.0}]), 'figures': ['a.png']},
    ])
    text = (tmp_path / 'report.md').read_text()
    assert text.startswith('# Run')
    assert '- digest: abc' in text
    assert '| n | accuracy |' in text
    assert '![Figure 1](a.png)' in text


def test_plots_render_to_files(tmp_path, cam, cube) -> None:
    exporter = AnalysisExporter(str(tmp_path))
    renders = render_views(cube, (0.0, 0.0, 0.6), cam)
    assert exporter.export_figure(plot_canonical_views(renders, CanonicalViewSet.NAMES), 'views.png')

    fig, ax = figure_with_axis('trace')
    plot_refinement_trace(ax, [40.0, 20.0, 10.0], true_errors=[40.0, 20.0, 10.0], t_ref_deg=2.0)
    assert ax.get_yscale() == 'log'
    assert exporter.export_figure(fig, 'trace.png')

    fig, ax = figure_with_axis('tracking')
    plot_tracking_errors(ax, [{'frame_index': i, 'rot_err_deg': 0.0, 'event': e, 'discontinuity': i == 1}
                              for i, e in enumerate(['initialized', 'restarted', 'updated'])])
    assert exporter.export_figure(fig, 'tracking.png')

    fig, ax = figure_with_axis('accuracy')
    plot_accuracy(ax, {2: 0.5, 5: 0.75, 10: 1.0}, 'ours', [{'name': 'prior', 'accuracy': {'2': 0.1}}])
    assert len(ax.patches) == 6
    for name in ('views.png', 'trace.png', 'tracking.png'):
        assert (tmp_path / name).stat().st_size > 0


def test_empty_inputs_still_give_a_figure() -> None:
    fig, ax = figure_with_axis('trace')
    plot_refinement_trace(ax, [])
    plot_tracking_errors(ax, [])
    assert len(ax.texts) == 2
    assert len(plot_canonical_views([]).axes) == 0
