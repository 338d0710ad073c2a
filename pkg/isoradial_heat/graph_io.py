"""JSON graph files.

Layout (``schema_version`` 1), all arrays columnar, ``null`` where a value is
undefined (dual data of boundary edges, dual areas off the interior)::

    {
      "schema_version": 1,
      "h": float, "circumdiameter": float,
      "generator": {family, h, extent, spacing, row_angles, col_angles, angle_margin} | null,
      "vertices": {"positions": [[x, y], ...], "interior": [bool, ...], "dual_areas": [float | null, ...]},
      "edges": {"endpoints": [[u, v], ...], "length": [...], "dual_length": [...],
                "dual_endpoints": [[[x, y], [x, y]] | null, ...]},
      "faces": {"cycles": [[v, ...], ...], "circumcenters": [[x, y], ...]}
    }

Loading trusts the stored lengths and areas, so a file can be checked exactly
as it was written.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import constants
from .errors import GraphFileError
from .geometry import GeneratorSpec, IsoradialGraph


def graph_to_dict(g: IsoradialGraph) -> dict[str, Any]:
    dual_endpoints = [
        None if not math.isfinite(length) else ends.tolist()
        for length, ends in zip(g.dual_lengths, g.dual_endpoints)
    ]
    return {
        "schema_version": constants.GRAPH_SCHEMA_VERSION,
        "h": g.h,
        "circumdiameter": g.circumdiameter,
        "generator": None if g.spec is None else g.spec.to_dict(),
        "vertices": {
            "positions": g.positions.tolist(),
            "interior": [bool(flag) for flag in g.interior],
            "dual_areas": _nullable(g.dual_areas),
        },
        "edges": {
            "endpoints": g.edges.tolist(),
            "length": g.edge_lengths.tolist(),
            "dual_length": _nullable(g.dual_lengths),
            "dual_endpoints": dual_endpoints,
        },
        "faces": {
            "cycles": g.faces.tolist(),
            "circumcenters": g.circumcenters.tolist(),
        },
    }


def graph_from_dict(data: dict[str, Any]) -> IsoradialGraph:
    try:
        version = data["schema_version"]
        if version != constants.GRAPH_SCHEMA_VERSION:
            raise GraphFileError(
                f"Unsupported graph schema_version {version!r}; "
                f"this build reads version {constants.GRAPH_SCHEMA_VERSION}."
            )
        vertices = data["vertices"]
        edges = data["edges"]
        faces = data["faces"]
        n_edges = len(edges["endpoints"])
        dual_endpoints = np.full((n_edges, 2, 2), np.nan)
        for i, ends in enumerate(edges.get("dual_endpoints") or []):
            if ends is not None:
                dual_endpoints[i] = ends
        cycles = faces.get("cycles") or []
        return IsoradialGraph.from_arrays(
            vertices["positions"],
            edges["endpoints"],
            edge_lengths=edges["length"],
            dual_lengths=_denull(edges["dual_length"]),
            dual_areas=_denull(vertices["dual_areas"]),
            interior=vertices["interior"],
            h=float(data["h"]),
            circumdiameter=float(data["circumdiameter"]),
            faces=np.asarray(cycles, dtype=np.int64) if cycles else None,
            circumcenters=np.asarray(faces.get("circumcenters") or [], dtype=float) if cycles else None,
            dual_endpoints=dual_endpoints,
            spec=None if data.get("generator") is None else GeneratorSpec.from_dict(data["generator"]),
        )
    except GraphFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFileError(f"Malformed graph file: {exc}") from exc


def write_graph(g: IsoradialGraph, path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(graph_to_dict(g), separators=(",", ":")), encoding="utf-8")
    return path


def load_graph(path: Path) -> IsoradialGraph:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise GraphFileError(f"Cannot read graph file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise GraphFileError(f"Graph file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise GraphFileError(f"Graph file {path} must contain a JSON object.")
    return graph_from_dict(data)


def _nullable(values: np.ndarray) -> list[float | None]:
    return [float(v) if math.isfinite(v) else None for v in values]


def _denull(values: list[float | None]) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=float)
