"""Static SVG line charts of metrics CSVs"""

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from loguru import logger

from models.experiment import METRIC_COLUMNS
from pipeline.post_processing import read_metrics_csv
from utils.errors import ConfigError
from utils.file_utils import ensure_parent

PLOTTABLE_METRICS = [c for c in METRIC_COLUMNS if c not in ("round", "epoch")]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

WIDTH, HEIGHT = 640, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 160, 30, 50
TICKS = 5


@dataclass(frozen=True)
class Series:
    label: str
    points: Tuple[Tuple[float, float], ...]


def load_series(path: str, metric: str) -> Series:
    """
    (epoch, metric) points of one metrics CSV

    Per-round metrics are placed at fractional epochs round * epochs / rounds.

    Raises:
        ConfigError: unknown metric, or no values for it in the file
    """
    if metric not in PLOTTABLE_METRICS:
        raise ConfigError(f"Unknown metric '{metric}' (choose from {', '.join(PLOTTABLE_METRICS)})")
    rows = read_metrics_csv(path)
    if not rows:
        raise ConfigError(f"{path} has no metric rows")
    last_round = max(r["round"] for r in rows)
    last_epoch = max(r["epoch"] for r in rows)
    points = tuple(
        (r["round"] * last_epoch / last_round, r[metric]) for r in rows if r[metric] is not None
    )
    if not points:
        raise ConfigError(f"{path} has no values for '{metric}'")
    label = os.path.splitext(os.path.basename(path))[0]
    return Series(label, points)


def _span(values: Sequence[float]) -> Tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo - 0.5, hi + 0.5
    return lo, hi


def render_svg(series: List[Series], metric: str) -> str:
    """
    Render one polyline per series with axes, ticks and a legend

    Args:
        series: Series to draw, in legend order
        metric: Y-axis label

    Returns:
        SVG document text (identical for identical inputs)
    """
    xs = [x for s in series for x, _ in s.points]
    ys = [y for s in series for _, y in s.points]
    x_lo, x_hi = _span(xs)
    y_lo, y_hi = _span(ys)
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(WIDTH),
        "height": str(HEIGHT),
        "viewBox": f"0 0 {WIDTH} {HEIGHT}",
        "font-family": "sans-serif",
        "font-size": "12",
    })
    ET.SubElement(svg, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})

    axes = ET.SubElement(svg, "g", {"stroke": "black", "stroke-width": "1"})
    bottom, right = MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w
    ET.SubElement(axes, "line", {"x1": str(MARGIN_LEFT), "y1": str(bottom), "x2": str(right), "y2": str(bottom)})
    ET.SubElement(axes, "line", {"x1": str(MARGIN_LEFT), "y1": str(MARGIN_TOP), "x2": str(MARGIN_LEFT), "y2": str(bottom)})

    for i in range(TICKS + 1):
        xv = x_lo + (x_hi - x_lo) * i / TICKS
        yv = y_lo + (y_hi - y_lo) * i / TICKS
        tick_x = ET.SubElement(svg, "text", {"x": f"{px(xv):.2f}", "y": str(bottom + 18), "text-anchor": "middle"})
        tick_x.text = format(xv, ".3g")
        tick_y = ET.SubElement(svg, "text", {"x": str(MARGIN_LEFT - 6), "y": f"{py(yv) + 4:.2f}", "text-anchor": "end"})
        tick_y.text = format(yv, ".3g")

    x_label = ET.SubElement(svg, "text", {"x": f"{MARGIN_LEFT + plot_w / 2:.2f}", "y": str(HEIGHT - 10), "text-anchor": "middle"})
    x_label.text = "epoch"
    y_label = ET.SubElement(svg, "text", {
        "x": "16", "y": f"{MARGIN_TOP + plot_h / 2:.2f}", "text-anchor": "middle",
        "transform": f"rotate(-90 16 {MARGIN_TOP + plot_h / 2:.2f})",
    })
    y_label.text = metric

    for index, s in enumerate(series):
        color = PALETTE[index % len(PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in s.points)
        ET.SubElement(svg, "polyline", {"points": points, "fill": "none", "stroke": color, "stroke-width": "1.5"})
        legend_y = MARGIN_TOP + 10 + 18 * index
        ET.SubElement(svg, "rect", {"x": str(right + 12), "y": str(legend_y - 8), "width": "12", "height": "3", "fill": color})
        entry = ET.SubElement(svg, "text", {"x": str(right + 30), "y": str(legend_y)})
        entry.text = s.label

    return ET.tostring(svg, encoding="unicode") + "\n"


def plot_metrics(csv_paths: Sequence[str], metric: str, out_path: str) -> str:
    """Load every CSV, render the chart and write it to out_path"""
    if not csv_paths:
        raise ConfigError("No metrics CSV given")
    series = [load_series(path, metric) for path in csv_paths]
    document = render_svg(series, metric)
    ensure_parent(out_path)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(document)
    logger.info(f"[PLOT] ✅ {len(series)} series of '{metric}' written to {out_path}")
    return out_path
