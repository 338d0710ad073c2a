import math
from pathlib import Path

import numpy as np

from isoradial_heat.generators import generate
from isoradial_heat.geometry import GeneratorSpec, IsoradialGraph, project

TRACK_ROWS = (0.0, 0.35)
TRACK_COLS = (math.pi / 2.0, 1.2)


def square_graph(h: float = 1.0, extent: int = 6, spacing: str = "spacing") -> IsoradialGraph:
    return generate(GeneratorSpec(family="square", h=h, extent=extent, spacing=spacing))


def triangular_graph(h: float = 1.0, extent: int = 5) -> IsoradialGraph:
    return generate(GeneratorSpec(family="triangular", h=h, extent=extent))


def rhombic_graph(
    h: float = 1.0,
    extent: int = 8,
    row_angles: tuple[float, ...] = TRACK_ROWS,
    col_angles: tuple[float, ...] = TRACK_COLS,
) -> IsoradialGraph:
    return generate(
        GeneratorSpec(family="rhombic-tracks", h=h, extent=extent, row_angles=row_angles, col_angles=col_angles)
    )


UNEVEN_ROWS = (0.0, 0.35, 0.1)
UNEVEN_COLS = (math.pi / 2.0, 1.2, 1.4)


def uneven_rhombic_graph(h: float = 1.0, extent: int = 12) -> IsoradialGraph:
    """Rhombic tracks whose vertex weights m vary from vertex to vertex."""
    return rhombic_graph(h, extent, UNEVEN_ROWS, UNEVEN_COLS)


def edge_graph() -> IsoradialGraph:
    """Two vertices joined by one edge with omega = 1 and unit dual areas.

    The variable-speed kernel is p_t(0, 1) = (1 - exp(-t)) / 2.
    """
    return IsoradialGraph.from_arrays(
        [[0.0, 0.0], [1.0, 0.0]],
        [[0, 1]],
        dual_lengths=[1.0],
        dual_areas=[1.0, 1.0],
    )


def path_graph() -> IsoradialGraph:
    return IsoradialGraph.from_arrays(
        [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        [[0, 1], [1, 2]],
        dual_lengths=[1.0, 2.0],
        dual_areas=[1.0, 2.0, 1.5],
    )


def center(g: IsoradialGraph) -> int:
    return project(g, (0.0, 0.0))


def vertex_at(g: IsoradialGraph, x: float, y: float) -> int:
    v = project(g, (x, y))
    assert np.allclose(g.positions[v], [x, y]), f"no vertex at ({x}, {y})"
    return v


def write_text(directory: Path, name: str, text: str) -> Path:
    path = Path(directory) / name
    path.write_text(text, encoding="utf-8")
    return path


SQUARE_CONFIG = """\
schema_version: 1
kind: generate
graph:
  family: square
  h: 1.0
  extent: 10
seed: 0
"""

TRIANGULAR_CONFIG = """\
schema_version: 1
kind: generate
graph:
  family: triangular
  h: 1.0
  extent: 8
"""

GRAPH_SWEEP_CONFIG = """\
schema_version: 1
kind: sweep
graph:
  family: square
  h: 0.25
sweep:
  regime: graph
  x: [0.0, 0.0]
  y: [1.0, 0.0]
  t: 0.5
  beta: 2.0
  h_sequence: [0.25]
  threshold: 10.0
seed: 0
"""

CRITICAL_CONFIG = """\
schema_version: 1
kind: sweep
graph:
  family: square
  h: 0.25
sweep:
  regime: graph
  x: [0.0, 0.0]
  y: [1.0, 0.0]
  t: 1.0
  beta: 1.0
  h_sequence: [0.25]
"""
