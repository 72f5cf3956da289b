# visualization/export.py

"""
Export of benchmark results: tables, JSON, rasters, figures and a markdown report.
"""

import json
import logging
import os
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from posematch.config import PLOT_STYLES, REPORT
from posematch.core.model import Image, Mask
from posematch.modules.camera_raster import write_pgm, write_ppm

logger = logging.getLogger(__name__)


class NumpyEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


class AnalysisExporter:
    """Writes results under one output directory."""

    SUPPORTED_FORMATS = {
        "image": [".png", ".svg", ".pdf"],
        "data": [".csv", ".json"],
        "raster": [".ppm", ".pgm"],
        "report": [".md"],
    }

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def export_figure(self, fig: Figure, filename: str, dpi: int = PLOT_STYLES['dpi']) -> bool:
        """
        Save a matplotlib figure.

        Args:
            fig: The figure to save
            filename: Name relative to the output directory, with extension
            dpi: Resolution for raster formats

        Returns:
            bool: Success status
        """
        target = self.path(filename)
        try:
            os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
            # No version stamp in PNG output
            metadata = {'Software': None} if target.endswith('.png') else None
            fig.savefig(target, dpi=dpi, bbox_inches='tight', metadata=metadata)
            logger.info(f"Exported figure to {target}")
            return True
        except (OSError, ValueError) as e:
            logger.error(f"Failed to export figure: {e}")
            return False

    def export_data(self, data: Union[Dict, List, pd.DataFrame], filename: str) -> bool:
        """
        Write a table or a JSON document, chosen by extension.

        Returns:
            bool: Success status
        """
        target = self.path(filename)
        try:
            os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
            _, ext = os.path.splitext(target)
            ext = ext.lower()
            if ext == '.csv':
                frame = data if isinstance(data, pd.DataFrame) else pd.DataFrame(data)
                frame.to_csv(target, index=False, float_format=REPORT['float_format'])
            elif ext == '.json':
                payload = data.to_dict(orient='records') if isinstance(data, pd.DataFrame) else data
                with open(target, 'w') as f:
                    json.dump(payload, f, cls=NumpyEncoder, indent=2, sort_keys=True)
            else:
                logger.error(f"Unsupported export format: {ext}")
                return False
            logger.info(f"Exported {ext[1:].upper()} to {target}")
            return True
        except (OSError, TypeError, ValueError) as e:
            logger.error(f"Failed to export data: {e}")
            return False

    def export_raster(self, raster: Union[Image, Mask], filename: str) -> None:
        """PPM for images, PGM for masks."""
        target = self.path(filename)
        if isinstance(raster, Mask):
            write_pgm(raster, target)
        else:
            write_ppm(raster, target)

    def export_markdown_report(self, title: str, sections: List[Dict[str, Any]],
                               filename: str = 'report.md') -> bool:
        """
        Markdown report with one section per entry.

        Args:
            title: Report title
            sections: Dicts with 'title' and any of 'content' (str, list or DataFrame)
                      and 'figures' (filenames already exported next to the report)
            filename: Name relative to the output directory

        Returns:
            bool: Success status
        """
        target = self.path(filename)
        try:
            os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
            md = [f'# {title}\n']
            for section in sections:
                md.append(f'## {section["title"]}')
                content = section.get('content')
                if isinstance(content, str):
                    md.append(f'\n{content}\n')
                elif isinstance(content, list):
                    md.extend(f'- {item}' for item in content)
                    md.append('')
                elif isinstance(content, pd.DataFrame):
                    md.append('| ' + ' | '.join(str(col) for col in content.columns) + ' |')
                    md.append('| ' + ' | '.join(['---'] * len(content.columns)) + ' |')
                    for _, row in content.iterrows():
                        md.append('| ' + ' | '.join(str(cell) for cell in row) + ' |')
                    md.append('')
                for i, fig_name in enumerate(section.get('figures', [])):
                    md.append(f'![Figure {i + 1}]({fig_name})')
                    md.append('')
            with open(target, 'w', encoding='utf-8') as f:
                f.write('\n'.join(md))
            logger.info(f"Exported Markdown report to {target}")
            return True
        except OSError as e:
            logger.error(f"Failed to export Markdown report: {e}")
            return False


__all__ = ['AnalysisExporter', 'NumpyEncoder']
