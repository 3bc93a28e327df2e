import math
import xml.etree.ElementTree as ET
from collections import Counter

import numpy as np
import pytest

from iso_collapse.diagram import (KINDS, TRAJECTORY_COLUMNS, WEIGHT_COLUMNS, DiagramSpec,
                                  UnsupportedDiagramError, emit_diagram, emit_trajectory_plots,
                                  emit_weight_diagram, line_plot_svg, read_csv, trajectory_rows,
                                  weight_diagram_rows, write_csv)
from iso_collapse.lie_rep import build_spin_irrep, weight_diagram, weyl_reflect
from iso_collapse.sde_engine import TrajectoryConfig, run_trajectory


def test_csv_round_trip(tmp_path):
    rows = [("a", 1.0, 1 / 3), ("b", -2.5e-17, 1e12)]
    p = write_csv(tmp_path / "sub" / "x.csv", ("name", "u", "v"), rows)
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"name,u,v\n")
    back = read_csv(p)
    assert back[0]["name"] == "a" and back[0]["v"] == pytest.approx(1 / 3, rel=1e-11)
    assert back[1]["v"] == 1e12


def test_weight_csv_multiset_is_weyl_invariant(tmp_path):
    rs = weight_diagram(2, 1)
    p = emit_weight_diagram(rs, tmp_path / "w.csv")
    rows = [r for r in read_csv(p) if r["kind"] == "weight"]
    assert sum(r["multiplicity"] for r in rows) == 15
    pts = Counter((round(r["x"], 8) + 0.0, round(r["y"], 8) + 0.0, r["multiplicity"])
                  for r in rows)
    for alpha in rs.roots:
        img = Counter()
        for r in rows:
            v = weyl_reflect(rs, alpha, np.array([r["x"], r["y"]]))
            img[(round(v[0], 8) + 0.0, round(v[1], 8) + 0.0, r["multiplicity"])] += 1
        assert img == pts


def test_weight_rows_content():
    rs = weight_diagram(1, 1)
    rows = weight_diagram_rows(rs)
    kinds = Counter(r[0] for r in rows)
    assert kinds == {"root": 6, "weight": 7, "fundamental_weight": 2, "weyl_vector": 1,
                     "mirror": 3}
    assert sum(r[0] == "root" and r[4].endswith("+") for r in rows) == 3
    assert len(WEIGHT_COLUMNS) == len(rows[0])


def test_weight_diagram_needs_rank_two():
    with pytest.raises(UnsupportedDiagramError):
        weight_diagram_rows(build_spin_irrep(1).roots)


def test_weight_svg_is_wellformed(tmp_path):
    p = emit_weight_diagram(weight_diagram(2, 1), tmp_path / "w.svg", "svg")
    root = ET.parse(p).getroot()
    circles = root.findall("{http://www.w3.org/2000/svg}circle")
    assert len(circles) == 6 + 12
    with pytest.raises(ValueError):
        emit_weight_diagram(weight_diagram(1, 0), tmp_path / "w.png", "png")


@pytest.fixture(scope="module")
def trajectory():
    g = build_spin_irrep(1)
    cfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=12.0, seed=3, record_stride=40)
    return g, run_trajectory(g, cfg)


def test_trajectory_rows(trajectory):
    g, tr = trajectory
    rows = trajectory_rows(g, tr.snapshots)
    assert len(rows) == len(tr.snapshots)
    first, last = rows[0], rows[-1]
    assert first[0] == 0 and first[1] == 0 and first[2] == 1.0
    assert math.isnan(first[3])  # the identity has no spectral gap
    assert last[3] == 0 and last[4] == 0
    assert all(0 <= r[2] <= 1 for r in rows)
    with pytest.raises(ValueError):
        trajectory_rows(g, [])


def test_emit_trajectory_plots(tmp_path, trajectory):
    g, tr = trajectory
    paths = emit_trajectory_plots(g, tr.snapshots, tmp_path)
    assert [c for c in read_csv(paths["csv"])[0]] == list(TRAJECTORY_COLUMNS)
    for key in ("radial_walk", "impurity_decay"):
        ET.parse(paths[key])


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("fmt", ["csv", "svg"])
def test_emit_diagram_every_kind(tmp_path, trajectory, kind, fmt):
    g, tr = trajectory
    src = weight_diagram(1, 1) if kind in ("roots", "weights") else (g, tr.snapshots)
    p = emit_diagram(DiagramSpec(kind, src, fmt), tmp_path / f"{kind}.{fmt}")
    assert p.exists() and p.stat().st_size > 0
    if fmt == "svg":
        ET.parse(p)


def test_diagram_spec_validation(trajectory):
    with pytest.raises(ValueError):
        DiagramSpec("histogram", weight_diagram(1, 0))
    with pytest.raises(ValueError):
        DiagramSpec("roots", weight_diagram(1, 0), "pdf")
    with pytest.raises(UnsupportedDiagramError):
        DiagramSpec("roots", trajectory)
    with pytest.raises(UnsupportedDiagramError):
        DiagramSpec("radial_walk", weight_diagram(1, 0))


def test_line_plot_handles_nan_and_constant():
    svg = line_plot_svg([0, 1, 2, 3], {"a": [1, np.nan, 1, 1]}, log_y=True)
    root = ET.fromstring(svg)
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2
