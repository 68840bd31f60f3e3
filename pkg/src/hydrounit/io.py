"""Artifact writers: versioned CSV, self-contained SVG plots and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from . import __version__

CSV_SCHEMAS = {
    "balance": 1,
    "stability": 1,
    "trajectory": 1,
    "amplitude": 1,
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, schema: str, columns, rows) -> Path:
    """Write rows under a ``# hydrounit.<schema>/<version>`` header comment.

    Floats use the shortest round-trip representation, so reading a file
    back reproduces the exact values.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# hydrounit.{schema}/{CSV_SCHEMAS[schema]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`: returns ``(schema_line, columns, rows)``."""
    with Path(path).open(newline="") as fh:
        head = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        columns = next(reader)
        return head, columns, [row for row in reader]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    command: list
    config_hash: str
    version: str = __version__
    timestamp: str = ""
    outputs: list = field(default_factory=list)

    def add(self, path, root) -> None:
        path = Path(path)
        self.outputs.append(
            {"path": str(path.relative_to(root)), "sha256": sha256_file(path)}
        )

    def write(self, root) -> Path:
        if not self.timestamp:
            self.timestamp = _timestamp()
        return write_json(Path(root) / "manifest.json", asdict(self))


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


# --- SVG ------------------------------------------------------------------------

PLOT_KINDS = ("timeseries", "projection3", "curve", "sweep_band")


@dataclass
class PlotSpec:
    """What to draw and where.

    ``variables`` name CSV columns: ``(x, y1, ...)`` for timeseries/curve,
    three names for projection3, ``(gamma, theta)`` for sweep_band.
    """

    kind: str
    variables: tuple
    xlabel: str = ""
    ylabel: str = ""
    path: str = "plot.svg"
    title: str = ""

    def validate(self, columns) -> None:
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        missing = [v for v in self.variables if v not in columns]
        if missing:
            raise ValueError(f"plot variables not in data: {missing}")
        if self.kind == "projection3" and len(self.variables) != 3:
            raise ValueError("projection3 needs exactly three variables")
        if len(self.variables) < 2:
            raise ValueError("a plot needs at least two variables")


W, H = 640, 420
ML, MR, MT, MB = 70, 20, 36, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _range(values):
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


class _Frame:
    def __init__(self, xr, yr):
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr

    def x(self, v):
        return ML + (v - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def y(self, v):
        return H - MB - (v - self.y0) / (self.y1 - self.y0) * (H - MT - MB)


def _axes(frame: _Frame, spec: PlotSpec, with_ticks: bool = True) -> list[str]:
    out = [
        f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(spec.xlabel)}</text>',
        f'<text x="16" y="{H / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {H / 2:.1f})">{escape(spec.ylabel)}</text>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle">{escape(spec.title)}</text>',
    ]
    if with_ticks:
        for i in range(5):
            xv = frame.x0 + (frame.x1 - frame.x0) * i / 4
            yv = frame.y0 + (frame.y1 - frame.y0) * i / 4
            out.append(
                f'<text x="{_num(frame.x(xv))}" y="{H - MB + 16}" text-anchor="middle" '
                f'font-size="10">{xv:.4g}</text>'
            )
            out.append(
                f'<text x="{ML - 6}" y="{_num(frame.y(yv) + 3)}" text-anchor="end" '
                f'font-size="10">{yv:.4g}</text>'
            )
    return out


def _polyline(points, color, frame) -> str:
    pts = " ".join(
        f"{_num(frame.x(x))},{_num(frame.y(y))}"
        for x, y in points
        if math.isfinite(x) and math.isfinite(y)
    )
    return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>'


def _doc(body: list[str]) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def render_svg(spec: PlotSpec, data: dict, root=".", extra: dict | None = None) -> Path:
    """Render ``data`` (column name -> list of floats) according to ``spec``.

    ``extra`` carries kind-specific inputs: ``stable`` flags for
    ``sweep_band`` and an optional ``window`` ``(gamma_1, gamma_2)``.
    """
    spec.validate(list(data))
    extra = extra or {}
    if spec.kind in ("timeseries", "curve"):
        body = _line_plot(spec, data, markers=spec.kind == "curve")
    elif spec.kind == "projection3":
        body = _projection(spec, data)
    else:
        body = _sweep_band(spec, data, extra)
    path = Path(root) / spec.path
    path.write_text(_doc(body))
    return path


def _line_plot(spec, data, markers):
    xs = [float(v) for v in data[spec.variables[0]]]
    ys = {name: [float(v) for v in data[name]] for name in spec.variables[1:]}
    frame = _Frame(_range(xs), _range([v for col in ys.values() for v in col]))
    body = _axes(frame, spec)
    for n, (name, col) in enumerate(ys.items()):
        color = COLORS[n % len(COLORS)]
        body.append(_polyline(zip(xs, col), color, frame))
        if markers:
            for x, y in zip(xs, col):
                if math.isfinite(x) and math.isfinite(y):
                    body.append(
                        f'<circle cx="{_num(frame.x(x))}" cy="{_num(frame.y(y))}" r="2" fill="{color}"/>'
                    )
        body.append(
            f'<text x="{W - MR - 4}" y="{MT + 14 + 14 * n}" text-anchor="end" '
            f'fill="{color}">{escape(name)}</text>'
        )
    return body


def _projection(spec, data):
    a, b, c = ([float(v) for v in data[name]] for name in spec.variables)

    def norm(col):
        lo, hi = _range(col)
        return [(v - lo) / (hi - lo) for v in col]

    na, nb, nc = norm(a), norm(b), norm(c)
    # fixed oblique view: x-axis to the right, y-axis receding, z-axis up
    px = [u + 0.45 * v for u, v in zip(na, nb)]
    py = [w + 0.3 * v for v, w in zip(nb, nc)]
    frame = _Frame((0.0, 1.45), (0.0, 1.3))
    body = _axes(frame, spec, with_ticks=False)
    body.append(_polyline(zip(px, py), COLORS[0], frame))
    o = (frame.x(0), frame.y(0))
    for (dx, dy), name in zip(((1, 0), (0.45, 0.3), (0, 1)), spec.variables):
        ex, ey = frame.x(dx), frame.y(dy)
        body.append(
            f'<line x1="{_num(o[0])}" y1="{_num(o[1])}" x2="{_num(ex)}" y2="{_num(ey)}" stroke="#888"/>'
        )
        body.append(f'<text x="{_num(ex + 4)}" y="{_num(ey - 4)}">{escape(name)}</text>')
    return body


def _sweep_band(spec, data, extra):
    xs = [float(v) for v in data[spec.variables[0]]]
    ys = [float(v) for v in data[spec.variables[1]]]
    stable = extra.get("stable", [True] * len(xs))
    frame = _Frame(_range(xs), _range(ys))
    body = _axes(frame, spec)
    window = extra.get("window")
    if window and window[0] is not None and window[1] is not None:
        x0, x1 = frame.x(window[0]), frame.x(window[1])
        body.append(
            f'<rect x="{_num(x0)}" y="{MT}" width="{_num(x1 - x0)}" height="{H - MT - MB}" '
            'fill="#d62728" fill-opacity="0.12"/>'
        )
    for x, y, ok in zip(xs, ys, stable):
        if not (math.isfinite(x) and math.isfinite(y)):
            continue
        cx, cy = frame.x(x), frame.y(y)
        if ok:
            body.append(
                f'<path d="M{_num(cx - 3)},{_num(cy)}h6M{_num(cx)},{_num(cy - 3)}v6" stroke="#1f77b4"/>'
            )
        else:
            body.append(
                f'<path d="M{_num(cx - 3)},{_num(cy - 3)}l6,6M{_num(cx - 3)},{_num(cy + 3)}l6,-6" '
                'stroke="#d62728"/>'
            )
    return body
