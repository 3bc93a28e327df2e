"""CSV and SVG output for weight diagrams and trajectory time series.

CSV files are UTF-8 with a header row, LF line endings and ``%.12g``
numbers. Weight-diagram columns are ``kind,x,y,multiplicity,label`` with
``kind`` one of ``root``, ``weight``, ``fundamental_weight``,
``weyl_vector`` or ``mirror`` (for mirrors ``x,y`` is the unit direction of
the reflection line). Trajectory columns are
``t,alpha,impurity,d_V,d_U,log_scale``; ``d_V`` and ``d_U`` are ``nan``
where the top singular value is degenerate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coherent import impurity
from .lie_rep import GeneratorSet, RootSystem
from .numerics import dagger
from .svd_coords import decompose, projector_distance

__all__ = [
    "UnsupportedDiagramError",
    "WEIGHT_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "DiagramSpec",
    "weight_diagram_rows",
    "trajectory_rows",
    "write_csv",
    "read_csv",
    "weight_diagram_svg",
    "line_plot_svg",
    "emit_weight_diagram",
    "emit_trajectory_plots",
    "emit_diagram",
]

WEIGHT_COLUMNS = ("kind", "x", "y", "multiplicity", "label")
TRAJECTORY_COLUMNS = ("t", "alpha", "impurity", "d_V", "d_U", "log_scale")
KINDS = ("roots", "weights", "radial_walk", "impurity_decay")


class UnsupportedDiagramError(ValueError):
    """Raised for diagram requests the source data cannot support."""


def _fmt(v):
    if isinstance(v, str):
        return v
    return "%.12g" % v


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    """Parse a CSV written by :func:`write_csv`; numeric-looking fields become floats."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out


# ------------------------------------------------------------ weight diagrams

def weight_diagram_rows(rs: RootSystem, kinds=("root", "weight", "fundamental_weight",
                                               "weyl_vector", "mirror")) -> list[tuple]:
    if rs.rank != 2:
        raise UnsupportedDiagramError(f"weight diagrams need rank 2, got rank {rs.rank}")
    rows = []
    if "root" in kinds:
        pos = {tuple(np.round(r, 12)) for r in rs.positive_roots}
        for i, r in enumerate(rs.roots):
            sign = "+" if tuple(np.round(r, 12)) in pos else "-"
            rows.append(("root", r[0], r[1], 1, f"root{i}{sign}"))
    if "weight" in kinds:
        for i, (mu, m) in enumerate(zip(rs.weights, rs.multiplicities)):
            rows.append(("weight", mu[0], mu[1], int(m), f"mu{i}"))
    if "fundamental_weight" in kinds:
        for i, f in enumerate(rs.fundamental_weights):
            rows.append(("fundamental_weight", f[0], f[1], 0, f"phi{i + 1}"))
    if "weyl_vector" in kinds:
        rows.append(("weyl_vector", rs.weyl_vector[0], rs.weyl_vector[1], 0, "omega"))
    if "mirror" in kinds:
        for i, r in enumerate(rs.positive_roots):
            d = np.array([-r[1], r[0]]) / np.linalg.norm(r)
            rows.append(("mirror", d[0], d[1], 0, f"mirror{i}"))
    return rows


def _svg_doc(width, height, body):
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n'
            + "\n".join(body) + "\n</svg>\n")


def weight_diagram_svg(rs: RootSystem, size: int = 400) -> str:
    """Roots (red), weights (black, opacity by multiplicity), mirrors and the positive chamber."""
    rows = weight_diagram_rows(rs)
    pts = np.array([[r[1], r[2]] for r in rows if r[0] in ("root", "weight")])
    extent = max(1.0, float(np.abs(pts).max())) * 1.25
    c = size / 2
    k = c / extent

    def xy(x, y):
        return c + k * x, c - k * y

    body = [f'<rect width="{size}" height="{size}" fill="white"/>']
    f1, f2 = rs.fundamental_weights
    far = 2 * extent
    p1 = xy(*(f1 / np.linalg.norm(f1) * far))
    p2 = xy(*(f2 / np.linalg.norm(f2) * far))
    body.append(f'<polygon points="{c:.2f},{c:.2f} {p1[0]:.2f},{p1[1]:.2f} '
                f'{p2[0]:.2f},{p2[1]:.2f}" fill="#ffe9a8" fill-opacity="0.6"/>')
    for r in rows:
        if r[0] == "mirror":
            a, b = xy(r[1] * far, r[2] * far), xy(-r[1] * far, -r[2] * far)
            body.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                        'stroke="#888" stroke-dasharray="4 3"/>')
    mmax = max(r[3] for r in rows if r[0] == "weight")
    for r in rows:
        x, y = xy(r[1], r[2])
        if r[0] == "root":
            body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="red"/>')
        elif r[0] == "weight":
            op = 0.35 + 0.65 * r[3] / mmax
            body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="7" fill="black" '
                        f'fill-opacity="{op:.3f}"><title>{r[4]} x{r[3]}</title></circle>')
    return _svg_doc(size, size, body)


def emit_weight_diagram(rs: RootSystem, path, fmt: str = "csv") -> Path:
    """Write a rank-2 weight diagram as CSV or SVG."""
    if fmt == "csv":
        return write_csv(path, WEIGHT_COLUMNS, weight_diagram_rows(rs))
    if fmt == "svg":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(weight_diagram_svg(rs), encoding="utf-8")
        return path
    raise ValueError(f"unknown format {fmt!r}")


# ------------------------------------------------------------ trajectories

def trajectory_rows(gen: GeneratorSet, snapshots) -> list[tuple]:
    """``(t, alpha, impurity, d_V, d_U, log_scale)`` per ``(t, K, log_scale)`` snapshot.

    Projector distances are measured against the last snapshot. Impurity
    is clipped to ``[0, 1]`` to absorb rounding at the ends of its range.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("no snapshots to plot")
    coords = [decompose(gen, s[1]) for s in snapshots]
    final = coords[-1]
    rows = []
    for (t, K, ls), c in zip(snapshots, coords):
        imp = min(1.0, max(0.0, impurity(gen, dagger(K) @ K)))
        if c.gap_ok and final.gap_ok:
            dv = float(projector_distance(c.q_v, final.q_v))
            du = float(projector_distance(c.q_u, final.q_u))
        else:
            dv = du = math.nan
        rows.append((float(t), c.alpha, imp, dv, du, float(ls)))
    return rows


def line_plot_svg(x, series: dict, title: str = "", log_y: bool = False,
                  width: int = 560, height: int = 320) -> str:
    """Minimal multi-series line plot; ``nan`` points break the line."""
    x = np.asarray(x, dtype=float)
    colors = ("#1f5fbf", "#c0392b", "#2e8b57", "#7d3c98")
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if log_y:
        ys = {k: np.log10(np.where(v > 0, v, np.nan)) for k, v in ys.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [np.zeros(1)])
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        hi = lo + 1
    x0, x1 = float(x.min()), float(x.max()) if x.max() > x.min() else float(x.min()) + 1
    pad = 40

    def px(a, b):
        return (pad + (a - x0) / (x1 - x0) * (width - 2 * pad),
                height - pad - (b - lo) / (hi - lo) * (height - 2 * pad))

    body = [f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
            f'<text x="{pad}" y="{height - 10}" font-size="11">{x0:.3g}</text>',
            f'<text x="{width - pad}" y="{height - 10}" font-size="11" text-anchor="end">{x1:.3g}</text>',
            f'<text x="4" y="{pad}" font-size="11">{(hi if not log_y else 10 ** hi):.3g}</text>',
            f'<text x="4" y="{height - pad}" font-size="11">{(lo if not log_y else 10 ** lo):.3g}</text>']
    for i, (name, y) in enumerate(ys.items()):
        col = colors[i % len(colors)]
        segs, cur = [], []
        for a, b in zip(x, y):
            if np.isfinite(b):
                cur.append("%.2f,%.2f" % px(a, b))
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for s in segs:
            body.append(f'<polyline points="{" ".join(s)}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        body.append(f'<text x="{width - pad - 4}" y="{pad + 14 * (i + 1)}" font-size="11" '
                    f'text-anchor="end" fill="{col}">{name}</text>')
    return _svg_doc(width, height, body)


def emit_trajectory_plots(gen: GeneratorSet, snapshots, out_dir, prefix: str = "trajectory") -> dict:
    """Write the trajectory CSV plus radial-walk and impurity-decay SVG plots."""
    rows = trajectory_rows(gen, snapshots)
    out_dir = Path(out_dir)
    paths = {"csv": write_csv(out_dir / f"{prefix}.csv", TRAJECTORY_COLUMNS, rows)}
    t = [r[0] for r in rows]
    (out_dir / f"{prefix}_radial_walk.svg").write_text(
        line_plot_svg(t, {"alpha": [r[1] for r in rows]}, title="radial coordinate"),
        encoding="utf-8")
    (out_dir / f"{prefix}_impurity_decay.svg").write_text(
        line_plot_svg(t, {"impurity": [r[2] for r in rows], "d_V": [r[3] for r in rows],
                          "d_U": [r[4] for r in rows]}, title="collapse (log10)", log_y=True),
        encoding="utf-8")
    paths["radial_walk"] = out_dir / f"{prefix}_radial_walk.svg"
    paths["impurity_decay"] = out_dir / f"{prefix}_impurity_decay.svg"
    return paths


@dataclass(frozen=True)
class DiagramSpec:
    """What to draw, from which source, in which format.

    ``roots`` and ``weights`` need a :class:`RootSystem` source;
    ``radial_walk`` and ``impurity_decay`` need ``(gen, snapshots)``.
    """

    kind: str
    source: object
    fmt: str = "csv"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.fmt not in ("csv", "svg"):
            raise ValueError("fmt must be 'csv' or 'svg'")
        wants_roots = self.kind in ("roots", "weights")
        if wants_roots != isinstance(self.source, RootSystem):
            raise UnsupportedDiagramError(f"kind {self.kind!r} is incompatible with the source")


def emit_diagram(spec: DiagramSpec, path) -> Path:
    path = Path(path)
    if spec.kind in ("roots", "weights"):
        rs = spec.source
        if spec.fmt == "svg":
            return emit_weight_diagram(rs, path, "svg")
        kinds = ("root",) if spec.kind == "roots" else ("root", "weight", "fundamental_weight",
                                                        "weyl_vector", "mirror")
        return write_csv(path, WEIGHT_COLUMNS, weight_diagram_rows(rs, kinds))
    gen, snaps = spec.source
    rows = trajectory_rows(gen, snaps)
    if spec.fmt == "csv":
        return write_csv(path, TRAJECTORY_COLUMNS, rows)
    t = [r[0] for r in rows]
    if spec.kind == "radial_walk":
        svg = line_plot_svg(t, {"alpha": [r[1] for r in rows]}, title="radial coordinate")
    else:
        svg = line_plot_svg(t, {"impurity": [r[2] for r in rows]}, title="impurity (log10)",
                            log_y=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
