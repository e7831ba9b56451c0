"""Standalone SVG plots with the plotted numbers embedded as JSON.

Scaling reports are drawn on log-log axes (one circle per point plus the
fitted line when a slope exists); two-point reports are drawn on linear axes
as a polyline with one vertex per lag.  The numbers sit in a
``<metadata id="data">`` element so tests and CI can read them back.
"""

import json
import math
from xml.sax.saxutils import escape

import numpy as np

from .stats import ScalingReport, TwoPointReport

W, H, PAD = 480, 360, 50


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _svg(body, title, xlabel, ylabel, data):
    blob = escape(json.dumps(data))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
        f'<metadata id="data">{blob}</metadata>\n'
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n'
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>\n'
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>\n'
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>\n'
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>\n'
        + body
        + "</svg>\n"
    )


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _scaling_svg(rep):
    ok = rep.errors > 0
    if not ok.any():
        raise ValueError("scaling report has no positive errors to plot on log axes")
    lx, ly = np.log10(rep.epsilons[ok]), np.log10(rep.errors[ok])
    sx = _scale(lx.min(), lx.max(), PAD + 10, W - PAD - 10)
    sy = _scale(ly.min(), ly.max(), H - PAD - 10, PAD + 10)
    parts = [
        f'<circle class="marker" cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="4" fill="{"steelblue" if u else "gray"}"/>\n'
        for a, b, u in zip(lx, ly, rep.used[ok])
    ]
    if math.isfinite(rep.slope):
        x0, x1 = lx.min(), lx.max()
        # log10 e = slope log10 eps + intercept / ln 10
        c = rep.intercept / math.log(10)
        parts.append(
            f'<line class="fit" x1="{sx(x0):.2f}" y1="{sy(rep.slope * x0 + c):.2f}" '
            f'x2="{sx(x1):.2f}" y2="{sy(rep.slope * x1 + c):.2f}" stroke="crimson"/>\n'
        )
    data = {
        "kind": "scaling",
        "epsilons": rep.epsilons.tolist(),
        "errors": rep.errors.tolist(),
        "std_errors": rep.std_errors.tolist(),
        "used": rep.used.tolist(),
        "slope": _finite(rep.slope),
        "intercept": _finite(rep.intercept),
        "lag": rep.lag,
    }
    title = f"error scaling, slope {rep.slope:.3f}" if math.isfinite(rep.slope) else "error scaling"
    return _svg("".join(parts), title, "log10 eps", "log10 error", data)


def _two_point_svg(rep):
    t, v = rep.times, rep.values
    sx = _scale(t.min(), t.max(), PAD + 10, W - PAD - 10)
    sy = _scale(min(v.min(), 0.0), v.max(), H - PAD - 10, PAD + 10)
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, v))
    body = f'<polyline class="series" points="{pts}" fill="none" stroke="steelblue"/>\n'
    data = {
        "kind": "two_point",
        "lags": rep.lags.tolist(),
        "delta": rep.delta,
        "values": rep.values.tolist(),
        "std_errors": rep.std_errors.tolist(),
    }
    return _svg(body, "two-point correlation", "time lag", "k(t)", data)


def emit_plot(report, path):
    """Write ``report`` as an SVG file at ``path`` and return the path."""
    if isinstance(report, ScalingReport):
        if report.epsilons.size == 0:
            raise ValueError("cannot plot an empty scaling report")
        text = _scaling_svg(report)
    elif isinstance(report, TwoPointReport):
        if report.lags.size == 0:
            raise ValueError("cannot plot an empty two-point report")
        text = _two_point_svg(report)
    else:
        raise TypeError(f"cannot plot {type(report).__name__}")
    with open(path, "w") as fh:
        fh.write(text)
    return path


def read_plot_data(path):
    """The JSON block embedded by :func:`emit_plot`."""
    from xml.etree import ElementTree as ET

    root = ET.parse(path).getroot()
    node = root.find("{http://www.w3.org/2000/svg}metadata")
    return json.loads(node.text)
