"""Minimal self-contained SVG line charts."""

import math
import xml.etree.ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .errors import NonPositiveOnLogAxis

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
          "#7f7f7f")


def _transform(values, log, axis):
    out = []
    for v in values:
        if log:
            if not v > 0:
                raise NonPositiveOnLogAxis(f"{axis} value {v!r} cannot go on a log axis")
            out.append(math.log10(v))
        else:
            out.append(float(v))
    return out


def _span(values):
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def render_chart(series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """SVG text for ``series``: a list of ``(label, xs, ys)``.

    Points with a non-finite coordinate are dropped. Axis ranges are stored
    as ``data-*`` attributes so the polylines can be mapped back to values.
    """
    prepared = []
    for label, xs, ys in series:
        pts = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        tx = _transform([p[0] for p in pts], logx, "x")
        ty = _transform([p[1] for p in pts], logy, "y")
        prepared.append((label, tx, ty))
    all_x = [v for _, tx, _ in prepared for v in tx] or [0.0]
    all_y = [v for _, _, ty in prepared for v in ty] or [0.0]
    x0, x1 = _span(all_x)
    y0, y1 = _span(all_y)
    pw = WIDTH - LEFT - RIGHT
    ph = HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<g id="plot" data-xmin="{x0!r}" data-xmax="{x1!r}" data-ymin="{y0!r}" '
        f'data-ymax="{y1!r}" data-logx="{int(logx)}" data-logy="{int(logy)}" '
        f'data-left="{LEFT}" data-top="{TOP}" data-width="{pw}" data-height="{ph}">',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lx = f"1e{fx:.2g}" if logx else f"{fx:.3g}"
        ly = f"1e{fy:.2g}" if logy else f"{fy:.3g}"
        out.append(f'<text x="{px(fx):.2f}" y="{TOP + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{lx}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{py(fy) + 3:.2f}" text-anchor="end" '
                   f'font-size="10">{ly}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')
    for idx, (label, tx, ty) in enumerate(prepared):
        color = COLORS[idx % len(COLORS)]
        points = " ".join(f"{px(a):.6f},{py(b):.6f}" for a, b in zip(tx, ty))
        out.append(f'<polyline class="series" data-label={quoteattr(str(label))} '
                   f'fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = TOP + 14 + 16 * idx
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly}" x2="{LEFT + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 34}" y="{ly + 4}" font-size="11">'
                   f'{escape(str(label))}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_chart_svg(path, series, **options):
    text = render_chart(series, **options)
    with open(path, "w") as fh:
        fh.write(text)
    return text


def parse_chart_svg(text):
    """Recover ``{label: (xs, ys)}`` in data units from an emitted chart."""
    root = ET.fromstring(text)
    ns = {"s": "http://www.w3.org/2000/svg"}
    plot = root.find(".//s:g[@id='plot']", ns)
    a = {key: float(plot.get(f"data-{key}"))
         for key in ("xmin", "xmax", "ymin", "ymax", "left", "top", "width", "height")}
    logx = plot.get("data-logx") == "1"
    logy = plot.get("data-logy") == "1"
    result = {}
    for line in plot.findall("s:polyline", ns):
        xs, ys = [], []
        for pair in line.get("points").split():
            sx, sy = (float(v) for v in pair.split(","))
            vx = a["xmin"] + (sx - a["left"]) / a["width"] * (a["xmax"] - a["xmin"])
            vy = a["ymax"] - (sy - a["top"]) / a["height"] * (a["ymax"] - a["ymin"])
            xs.append(10 ** vx if logx else vx)
            ys.append(10 ** vy if logy else vy)
        result[line.get("data-label")] = (xs, ys)
    return result
