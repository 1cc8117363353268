"""Plain SVG rendering of series and box-cover CSV files.

The markup is assembled by hand with fixed number formatting so identical
input always yields identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction

from .errors import ContractError

STYLES = ("line", "scatter", "boxes")
WIDTH, HEIGHT, MARGIN = 640, 480, 60
BOX_COLUMNS = ("x_lo", "x_hi", "y_lo", "y_hi")


def _number(text: str) -> float:
    s = text.strip()
    try:
        return float(Fraction(s)) if "/" in s else float(s)
    except (ValueError, ZeroDivisionError):
        raise ContractError(f"not a number: {text!r}") from None


def read_table(text: str) -> tuple:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0]:
        raise ContractError("empty CSV input")
    header, body = rows[0], [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise ContractError("CSV rows do not match the header width")
    return header, body


def _columns(header, body, style, x=None, y=None):
    if style == "boxes":
        missing = [c for c in BOX_COLUMNS if c not in header]
        if missing:
            raise ContractError(f"box plot needs columns {', '.join(missing)}")
        idx = [header.index(c) for c in BOX_COLUMNS]
        return [tuple(_number(r[i]) for i in idx) for r in body]
    if x is not None or y is not None:
        for name in (x, y):
            if name not in header:
                raise ContractError(f"no column {name!r} in the input")
        i, j = header.index(x), header.index(y)
        return [(_number(r[i]), _number(r[j])) for r in body], [x, y]
    # first two numeric columns: parameter and value
    numeric = []
    for j in range(len(header)):
        try:
            [_number(r[j]) for r in body[:1]]
            numeric.append(j)
        except ContractError:
            continue
        if len(numeric) == 2:
            break
    if len(numeric) < 2:
        raise ContractError("series plot needs two numeric columns")
    return [(_number(r[numeric[0]]), _number(r[numeric[1]])) for r in body], [header[j] for j in numeric]


def _fmt(v: float) -> str:
    return f"{v:.3f}"


class _Frame:
    def __init__(self, xs, ys):
        self.x0, self.x1 = _span(xs)
        self.y0, self.y1 = _span(ys)

    def px(self, x):
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)


def _span(vals):
    lo, hi = min(vals), max(vals)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _axes(frame: _Frame, xlabel: str, ylabel: str, log: bool) -> list:
    y_lo = f"1e{frame.y0:.2f}" if log else f"{frame.y0:.4g}"
    y_hi = f"1e{frame.y1:.2f}" if log else f"{frame.y1:.4g}"
    b, t = HEIGHT - MARGIN, MARGIN
    l, r = MARGIN, WIDTH - MARGIN
    return [
        f'<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>',
        f'<line x1="{l}" y1="{b}" x2="{l}" y2="{t}" stroke="black"/>',
        f'<text x="{l}" y="{b + 20}" font-size="12">{frame.x0:.4g}</text>',
        f'<text x="{r}" y="{b + 20}" font-size="12" text-anchor="end">{frame.x1:.4g}</text>',
        f'<text x="{l - 5}" y="{b}" font-size="12" text-anchor="end">{y_lo}</text>',
        f'<text x="{l - 5}" y="{t + 4}" font-size="12" text-anchor="end">{y_hi}</text>',
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 15}" font-size="13" text-anchor="middle">{_esc(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 15 {HEIGHT / 2:.0f})">{_esc(ylabel)}{" (log10)" if log else ""}</text>',
    ]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plot(text: str, style: str, log: bool = False, x: str | None = None, y: str | None = None) -> bytes:
    """SVG bytes for a CSV table; ``log`` puts the value axis on log10 scale.

    Series styles plot column ``y`` against ``x`` (both or neither given),
    defaulting to the first two numeric columns.
    """
    if style not in STYLES:
        raise ContractError(f"unknown plot style {style!r}")
    header, body = read_table(text)
    if not body:
        raise ContractError("no data rows to plot")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if style == "boxes":
        boxes = _columns(header, body, style)
        frame = _Frame([b[0] for b in boxes] + [b[1] for b in boxes], [b[2] for b in boxes] + [b[3] for b in boxes])
        parts += _axes(frame, "x", "y", False)
        parts.append('<g fill="steelblue" stroke="none">')
        for xl, xh, yl, yh in boxes:
            x, y = frame.px(xl), frame.py(yh)
            w, h = frame.px(xh) - x, frame.py(yl) - y
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}"/>')
        parts.append("</g>")
    else:
        pts, names = _columns(header, body, style, x, y)
        if log:
            skipped = sum(1 for _, y in pts if not y > 0)
            pts = [(x, math.log10(y)) for x, y in pts if y > 0]
            if not pts:
                raise ContractError("no positive values for a log-scale plot")
            if skipped:
                parts.append(f"<!-- {skipped} non-positive values omitted -->")
        frame = _Frame([p[0] for p in pts], [p[1] for p in pts])
        parts += _axes(frame, names[0], names[1], log)
        coords = [(frame.px(x), frame.py(y)) for x, y in pts]
        if style == "line":
            seq = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in coords)
            parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{seq}"/>')
        else:
            parts.append('<g fill="steelblue">')
            parts += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2"/>' for a, b in coords]
            parts.append("</g>")
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")
