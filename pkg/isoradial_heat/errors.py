"""Exception hierarchy.

Every error carries a stable ``code`` and a JSON-ready payload so the CLI can
print structured diagnostics the same way for every failure.
"""

from __future__ import annotations

import json
from typing import Any


class IsoradialHeatError(RuntimeError):
    code = "error"

    def __init__(self, message: str, *, details: dict[str, Any] | None = None) -> None:
        self.details = dict(details or {})
        super().__init__(message)

    def to_payload(self) -> dict[str, Any]:
        return {"code": self.code, "message": str(self), "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, default=str)


class ConfigError(IsoradialHeatError):
    code = "config"


class GraphFileError(IsoradialHeatError):
    code = "graph_file"


class GeneratorError(IsoradialHeatError):
    code = "generator"


class GeometryError(IsoradialHeatError):
    code = "geometry"


class PreconditionError(IsoradialHeatError):
    code = "precondition"


class FeasibilityError(IsoradialHeatError):
    code = "infeasible"


class WindowTooSmallError(IsoradialHeatError):
    code = "window_too_small"

    def __init__(self, *, source: int, required_radius: int, available_radius: float) -> None:
        self.source = source
        self.required_radius = int(required_radius)
        self.available_radius = available_radius
        super().__init__(
            f"Window too small around vertex {source}: certified evaluation needs "
            f"combinatorial radius {self.required_radius} but the boundary is at "
            f"distance {available_radius}. Regenerate with extent >= "
            f"{self.required_radius + 1} around the source.",
            details={
                "source": source,
                "required_radius": self.required_radius,
                "available_radius": available_radius,
            },
        )


class BoundaryHitError(IsoradialHeatError):
    code = "boundary_hit"

    def __init__(self, *, vertex: int, time: float, required_radius: int) -> None:
        self.vertex = vertex
        self.time = time
        self.required_radius = int(required_radius)
        super().__init__(
            f"Walk reached non-interior vertex {vertex} at time {time:.6g}. "
            f"Use a window whose interior extends at least {self.required_radius} "
            "steps from the start vertex.",
            details={"vertex": vertex, "time": time, "required_radius": self.required_radius},
        )
