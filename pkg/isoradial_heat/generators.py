"""Finite windows of the square, triangular and rhombic-tracks families."""

from __future__ import annotations

import logging
import math

import numpy as np

from . import constants
from .errors import GeneratorError
from .geometry import GeneratorSpec, IsoradialGraph

logger = logging.getLogger(__name__)


def generate(spec: GeneratorSpec) -> IsoradialGraph:
    if spec.family not in constants.FAMILIES:
        raise GeneratorError(
            f"Unknown family {spec.family!r}. Expected one of: {', '.join(constants.FAMILIES)}."
        )
    if not (spec.h > 0 and math.isfinite(spec.h)):
        raise GeneratorError(f"Mesh size h must be positive and finite, got {spec.h}.")
    if spec.extent < 1:
        raise GeneratorError(f"Window extent must be at least 1, got {spec.extent}.")

    if spec.family == "square":
        positions, faces, diameter = _square(spec)
    elif spec.family == "triangular":
        positions, faces, diameter = _triangular(spec)
    else:
        positions, faces, diameter = _rhombic_tracks(spec)

    positions, faces = _compact(positions, faces)
    graph = IsoradialGraph.from_faces(positions, faces, h=spec.h, circumdiameter=diameter, spec=spec)
    logger.info(
        "Generated %s window: %d vertices, %d edges, %d faces, %d interior",
        spec.family,
        graph.n_vertices,
        graph.n_edges,
        len(graph.faces),
        int(graph.interior.sum()),
    )
    return graph


def _square(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray, float]:
    if spec.spacing not in constants.SPACING_CONVENTIONS:
        raise GeneratorError(
            f"Unknown spacing convention {spec.spacing!r}; use 'spacing' or 'circumdiameter'."
        )
    s = spec.h if spec.spacing == "spacing" else spec.h / math.sqrt(2.0)
    e = spec.extent
    side = 2 * e + 1
    a, b = np.meshgrid(np.arange(-e, e + 1), np.arange(-e, e + 1), indexing="ij")
    positions = s * np.stack([a.ravel(), b.ravel()], axis=1).astype(float)

    ids = np.arange(side * side).reshape(side, side)
    faces = np.stack(
        [ids[:-1, :-1].ravel(), ids[1:, :-1].ravel(), ids[1:, 1:].ravel(), ids[:-1, 1:].ravel()],
        axis=1,
    )
    return positions, faces, s * math.sqrt(2.0)


def _triangular(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray, float]:
    side_length = spec.h * math.sqrt(3.0) / 2.0
    e = spec.extent
    n = 2 * e + 1
    p, q = np.meshgrid(np.arange(-e, e + 1), np.arange(-e, e + 1), indexing="ij")
    keep = np.abs(p + q) <= e
    ids = np.full((n, n), -1, dtype=np.int64)
    ids[keep] = np.arange(int(keep.sum()))
    pk, qk = p[keep], q[keep]
    positions = side_length * np.stack([pk + 0.5 * qk, (math.sqrt(3.0) / 2.0) * qk], axis=1)

    v00, v10, v01, v11 = ids[:-1, :-1], ids[1:, :-1], ids[:-1, 1:], ids[1:, 1:]
    up = np.stack([v00.ravel(), v10.ravel(), v01.ravel()], axis=1)
    down = np.stack([v10.ravel(), v11.ravel(), v01.ravel()], axis=1)
    faces = np.concatenate([up, down])
    faces = faces[np.all(faces >= 0, axis=1)]
    return positions, faces, spec.h


def _rhombic_tracks(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray, float]:
    if not spec.row_angles or not spec.col_angles:
        raise GeneratorError("rhombic-tracks needs non-empty row_angles and col_angles.")
    e = spec.extent
    k = np.arange(-e, e)
    alpha = np.asarray(spec.row_angles, dtype=float)[k % len(spec.row_angles)]
    beta = np.asarray(spec.col_angles, dtype=float)[k % len(spec.col_angles)]
    _check_angles(alpha, beta, spec.angle_margin)

    radius = spec.h / 2.0
    row = _cumulative(np.exp(1j * alpha), e)
    col = _cumulative(np.exp(1j * beta), e)
    tiling = radius * (row[:, None] + col[None, :])

    n = 2 * e + 1
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    even = (i + j) % 2 == 0
    ids = np.full((n, n), -1, dtype=np.int64)
    ids[even] = np.arange(int(even.sum()))
    points = tiling[even]
    positions = np.stack([points.real, points.imag], axis=1)

    # Faces sit around odd tiling vertices whose four neighbours are in the window.
    odd = ~even
    odd[0, :] = odd[-1, :] = odd[:, 0] = odd[:, -1] = False
    oi, oj = np.nonzero(odd)
    faces = np.stack(
        [ids[oi + 1, oj], ids[oi, oj + 1], ids[oi - 1, oj], ids[oi, oj - 1]],
        axis=1,
    )
    return positions, faces, spec.h


def _check_angles(alpha: np.ndarray, beta: np.ndarray, margin: float | None) -> None:
    eps = constants.DEFAULT_ANGLE_MARGIN if margin is None else float(margin)
    if not 0.0 < eps < math.pi / 2.0:
        raise GeneratorError(f"angle_margin must lie in (0, pi/2), got {eps}.")
    theta = np.mod(beta[None, :] - alpha[:, None], 2.0 * math.pi)
    if np.any((theta <= 0.0) | (theta >= math.pi)):
        raise GeneratorError(
            "Angle sequences produce overlapping or degenerate rhombi: every "
            "col_angle - row_angle must lie strictly between 0 and pi (mod 2*pi).",
            details={"min_difference": float(theta.min()), "max_difference": float(theta.max())},
        )
    if np.any((theta < eps) | (theta > math.pi - eps)):
        raise GeneratorError(
            f"Bounded-angle property violated: rhombus angles must lie in [{eps:.6g}, pi - {eps:.6g}].",
            details={"min_difference": float(theta.min()), "max_difference": float(theta.max())},
        )


def _cumulative(steps: np.ndarray, e: int) -> np.ndarray:
    # steps[k + e] is the unit step from index k to k + 1, for k in [-e, e).
    return np.concatenate([[0.0], np.cumsum(steps)]) - steps[:e].sum()


def _compact(positions: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    used = np.unique(faces)
    if len(used) == len(positions):
        return positions, faces
    remap = np.full(len(positions), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return positions[used], remap[faces]
