# posematch/main.py

"""
Command-line interface: rendering, dataset generation, benchmarks and checks.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import pandas as pd

from posematch.config import GRADIENT_CHECK, STANDARDIZATION
from posematch.core.exceptions import PoseMatchError, handle_exceptions, ExperimentError
from posematch.modules.eval_harness import (
    ExperimentConfig,
    load_experiment_config,
    load_mesh,
    run_estimation_benchmark,
    run_tracking_benchmark,
    selftest,
    summary_table,
)
from posematch.modules.matcher import check_gradients, make_estimator
from posematch.modules.renderer import CanonicalViewSet, canonical_views, render_views
from posematch.modules.synth import (
    compute_standardization_stats,
    generate_dataset,
    generate_training_samples,
    write_dataset,
)
from posematch.visualization.export import AnalysisExporter
from posematch.visualization.plotters import (
    figure_with_axis,
    plot_accuracy,
    plot_canonical_views,
    plot_refinement_trace,
    plot_tracking_errors,
)

# Configurar logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def resolve_config(config_path: Optional[str], seed: Optional[int]) -> ExperimentConfig:
    """The experiment file when given, else the built-in defaults; --seed overrides every seed."""
    if config_path:
        return load_experiment_config(config_path, seed)
    cfg = ExperimentConfig()
    return cfg.with_seed(seed) if seed is not None else cfg


def cmd_render_views(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    mesh = load_mesh(cfg)
    z = sum(cfg.dataset.depth_range) / 2.0
    renders = render_views(mesh, (0.0, 0.0, z), cfg.cam)
    for name, out in zip(CanonicalViewSet.NAMES, renders):
        exporter.export_raster(out.rgb, f"view_{name}.ppm")
        exporter.export_raster(out.mask, f"view_{name}.pgm")
    angles = canonical_views().face_angles_deg()
    exporter.export_data(pd.DataFrame(angles, columns=CanonicalViewSet.NAMES), 'face_angles.csv')
    if plot:
        exporter.export_figure(plot_canonical_views(renders, CanonicalViewSet.NAMES), 'views.png')
    return 0


def cmd_gen_dataset(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    records = generate_dataset(load_mesh(cfg), cfg.dataset, cfg.cam)
    write_dataset(records, exporter.out_dir, cfg.dataset)
    return 0


def cmd_benchmark_estimate(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    report = run_estimation_benchmark(cfg, exporter.out_dir)
    table = summary_table(report, cfg.name, cfg.baselines)
    print(table)
    figures = []
    if plot:
        fig, ax = figure_with_axis('accuracy')
        plot_accuracy(ax, report.accuracy, cfg.name, cfg.baselines)
        if exporter.export_figure(fig, 'accuracy.png'):
            figures.append('accuracy.png')
        traces = pd.read_csv(exporter.path('traces.csv'))
        first = traces[traces['record'] == traces['record'].min()]
        fig, ax = figure_with_axis('trace')
        plot_refinement_trace(ax, first['theta_hat'].tolist(), t_ref_deg=cfg.refinement.t_ref_deg)
        if exporter.export_figure(fig, 'trace.png'):
            figures.append('trace.png')
    exporter.export_markdown_report(f"Estimation benchmark: {cfg.name}", [
        {'title': 'Configuration', 'content': [f"digest: {cfg.digest}", f"estimator: {cfg.estimator}",
                                               f"scenes: {report.n_samples}"]},
        {'title': 'Accuracy', 'content': f"```\n{table}\n```", 'figures': figures},
    ])
    return 0


def cmd_benchmark_track(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    summary = run_tracking_benchmark(cfg, exporter.out_dir)
    print(summary.to_frame().to_string(index=False))
    if plot:
        fig, ax = figure_with_axis('tracking')
        plot_tracking_errors(ax, summary.frame_rows)
        exporter.export_figure(fig, 'tracking.png')
    return 0


def cmd_check_gradients(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    report = check_gradients(GRADIENT_CHECK['n_points'], seed=cfg.noise.seed, h=GRADIENT_CHECK['h'])
    exporter.export_data(pd.DataFrame(report.rows), 'gradients.csv')
    for variant, err in sorted(report.max_rel_error.items()):
        print(f"{variant}: max relative error {err:.3e}")
    return 0 if report.passed else 1


def cmd_selftest(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    results = selftest()
    frame = pd.DataFrame([{'check': name, 'result': 'PASS' if ok else 'FAIL'} for name, ok in results.items()])
    exporter.export_data(frame, 'selftest.csv')
    print(frame.to_string(index=False))
    return 0 if all(results.values()) else 1


def cmd_gen_stats(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    stats = compute_standardization_stats(cfg.cam, STANDARDIZATION['pool_size'], seed=cfg.dataset.seed)
    os.makedirs(exporter.out_dir, exist_ok=True)
    stats.save(exporter.path('stats.json'))
    return 0


def cmd_gen_training(cfg: ExperimentConfig, exporter: AnalysisExporter, plot: bool) -> int:
    stats = compute_standardization_stats(cfg.cam, STANDARDIZATION['pool_size'], seed=cfg.dataset.seed)
    rows = generate_training_samples(load_mesh(cfg), cfg.dataset, cfg.cam,
                                     make_estimator(cfg.estimator, cfg.noise), stats)
    exporter.export_data(pd.DataFrame(rows), 'training.csv')
    return 0


COMMANDS = {
    'render-views': (cmd_render_views, 'Render the six canonical views of the configured mesh'),
    'gen-dataset': (cmd_gen_dataset, 'Generate and write a synthetic dataset'),
    'benchmark-estimate': (cmd_benchmark_estimate, 'Multi-view initialization + refinement benchmark'),
    'benchmark-track': (cmd_benchmark_track, 'Tracking benchmark on a synthetic trajectory'),
    'check-gradients': (cmd_check_gradients, 'Compare analytic loss gradients with finite differences'),
    'selftest': (cmd_selftest, 'Run the built-in property checks'),
    'gen-stats': (cmd_gen_stats, 'Fit standardization statistics of the regression targets'),
    'gen-training': (cmd_gen_training, 'Generate training rows with targets and losses'),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='posematch',
                                     description='Render-and-compare 6D pose estimation and tracking')
    parser.add_argument('--config', type=str, default=None, help='Experiment file (JSON, comments allowed)')
    parser.add_argument('--seed', type=int, default=None, help='Override every seed in the configuration')
    parser.add_argument('--out', type=str, default=None, help='Output directory (default: config out_dir)')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--plot', action='store_true', help='Also write figures')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, (_, help_text) in COMMANDS.items():
        subparsers.add_parser(name, help=help_text)
    return parser


@handle_exceptions(ExperimentError, "Command failed")
def run_command(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, args.seed)
    exporter = AnalysisExporter(args.out or cfg.out_dir)
    handler, _ = COMMANDS[args.command]
    logger.info(f"Running {args.command} (config digest {cfg.digest})")
    return handler(cfg, exporter, args.plot)


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line entry point."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return run_command(args)
    except PoseMatchError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
