"""Planar graph windows, their duals and metric structure.

Graphs are stored as flat numpy arrays so that windows with millions of
vertices stay cheap to build and to query. All arrays are treated as
read-only after construction.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from . import constants
from .errors import GeometryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"Point coordinates must be finite, got ({self.x}, {self.y}).")

    @classmethod
    def of(cls, value: "Point | complex | Sequence[float]") -> "Point":
        if isinstance(value, Point):
            return value
        if isinstance(value, complex):
            return cls(float(value.real), float(value.imag))
        x, y = value
        return cls(float(x), float(y))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Face:
    vertex_cycle: tuple[int, ...]
    circumcenter: Point
    circumradius: float


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    h: float
    extent: int
    spacing: str = "spacing"
    row_angles: tuple[float, ...] = ()
    col_angles: tuple[float, ...] = ()
    angle_margin: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "h": self.h,
            "extent": self.extent,
            "spacing": self.spacing,
            "row_angles": list(self.row_angles),
            "col_angles": list(self.col_angles),
            "angle_margin": self.angle_margin,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GeneratorSpec":
        return cls(
            family=str(data["family"]),
            h=float(data["h"]),
            extent=int(data["extent"]),
            spacing=str(data.get("spacing", "spacing")),
            row_angles=tuple(float(a) for a in data.get("row_angles") or ()),
            col_angles=tuple(float(a) for a in data.get("col_angles") or ()),
            angle_margin=None if data.get("angle_margin") is None else float(data["angle_margin"]),
        )

    def with_h(self, h: float, extent: int | None = None) -> "GeneratorSpec":
        return GeneratorSpec(
            family=self.family,
            h=h,
            extent=self.extent if extent is None else extent,
            spacing=self.spacing,
            row_angles=self.row_angles,
            col_angles=self.col_angles,
            angle_margin=self.angle_margin,
        )


@dataclass(frozen=True, eq=False)
class IsoradialGraph:
    """A finite window of a planar graph together with its dual.

    ``h`` is the mesh parameter used for scaling; ``circumdiameter`` is the
    common face circumdiameter (they differ only for the square lattice in the
    ``spacing`` convention). Boundary edges have ``nan`` dual data, and
    ``dual_areas`` is ``nan`` off the interior.
    """

    h: float
    circumdiameter: float
    positions: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray
    dual_lengths: np.ndarray
    dual_endpoints: np.ndarray
    faces: np.ndarray
    circumcenters: np.ndarray
    circumradii: np.ndarray
    dual_areas: np.ndarray
    interior: np.ndarray
    spec: GeneratorSpec | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)
    slot_edge: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.positions)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.concatenate([np.arange(len(self.edges))] * 2)
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=n)
        object.__setattr__(self, "indptr", np.concatenate([[0], np.cumsum(counts)]).astype(np.int64))
        object.__setattr__(self, "indices", dst[order].astype(np.int64))
        object.__setattr__(self, "slot_edge", eid[order].astype(np.int64))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_faces(
        cls,
        positions: np.ndarray,
        faces: np.ndarray,
        *,
        h: float,
        circumdiameter: float,
        spec: GeneratorSpec | None = None,
    ) -> "IsoradialGraph":
        positions = np.asarray(positions, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        n = len(positions)
        if faces.ndim != 2 or len(faces) == 0:
            raise GeometryError("A graph window needs at least one face.")

        corners = positions[faces]
        signed = _signed_areas(corners)
        faces = np.where((signed < 0)[:, None], faces[:, ::-1], faces)
        corners = positions[faces]
        centers = _circumcenters(corners[:, 0], corners[:, 1], corners[:, 2])
        radii = np.linalg.norm(corners[:, 0] - centers, axis=1)

        a = faces.ravel()
        b = np.roll(faces, -1, axis=1).ravel()
        face_id = np.repeat(np.arange(len(faces)), faces.shape[1])
        keys = np.minimum(a, b) * n + np.maximum(a, b)
        unique_keys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise GeometryError("An edge is shared by more than two faces; the embedding is not planar.")
        edges = np.stack([unique_keys // n, unique_keys % n], axis=1)

        order = np.argsort(inverse, kind="stable")
        sorted_faces = face_id[order]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = sorted_faces[starts]
        second = np.where(counts == 2, sorted_faces[np.minimum(starts + 1, len(sorted_faces) - 1)], -1)

        edge_lengths = np.linalg.norm(positions[edges[:, 0]] - positions[edges[:, 1]], axis=1)
        closed = second >= 0
        dual_endpoints = np.full((len(edges), 2, 2), np.nan)
        dual_endpoints[:, 0] = centers[first]
        dual_endpoints[closed, 1] = centers[second[closed]]
        dual_lengths = np.linalg.norm(dual_endpoints[:, 0] - dual_endpoints[:, 1], axis=1)

        on_boundary = np.zeros(n, dtype=bool)
        on_boundary[edges[~closed].ravel()] = True
        has_edges = np.bincount(edges.ravel(), minlength=n) > 0
        interior = has_edges & ~on_boundary

        kite = np.where(closed, 0.25 * edge_lengths * np.nan_to_num(dual_lengths), 0.0)
        areas = np.bincount(edges[:, 0], weights=kite, minlength=n) + np.bincount(
            edges[:, 1], weights=kite, minlength=n
        )
        areas = np.where(interior, areas, np.nan)

        return cls(
            h=float(h),
            circumdiameter=float(circumdiameter),
            positions=positions,
            edges=edges,
            edge_lengths=edge_lengths,
            dual_lengths=dual_lengths,
            dual_endpoints=dual_endpoints,
            faces=faces,
            circumcenters=centers,
            circumradii=radii,
            dual_areas=areas,
            interior=interior,
            spec=spec,
        )

    @classmethod
    def from_arrays(
        cls,
        positions: Sequence[Sequence[float]] | np.ndarray,
        edges: Sequence[Sequence[int]] | np.ndarray,
        *,
        dual_lengths: Sequence[float] | np.ndarray,
        dual_areas: Sequence[float] | np.ndarray,
        h: float = 1.0,
        circumdiameter: float | None = None,
        interior: Sequence[bool] | np.ndarray | None = None,
        edge_lengths: Sequence[float] | np.ndarray | None = None,
        faces: np.ndarray | None = None,
        circumcenters: np.ndarray | None = None,
        dual_endpoints: np.ndarray | None = None,
        spec: GeneratorSpec | None = None,
    ) -> "IsoradialGraph":
        """Build a window from explicit arrays, trusting the stored lengths.

        Used for small weighted graphs without faces and for reading graph
        files back exactly as they were written.
        """
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        edges = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        n = len(positions)
        if edge_lengths is None:
            edge_lengths = np.linalg.norm(positions[edges[:, 0]] - positions[edges[:, 1]], axis=1)
        if interior is None:
            interior = np.ones(n, dtype=bool)
        if faces is None:
            faces = np.zeros((0, 3), dtype=np.int64)
        if circumcenters is None:
            circumcenters = np.zeros((len(faces), 2))
        if dual_endpoints is None:
            dual_endpoints = np.full((len(edges), 2, 2), np.nan)
        faces = np.asarray(faces, dtype=np.int64)
        circumcenters = np.asarray(circumcenters, dtype=float).reshape(-1, 2)
        radii = (
            np.linalg.norm(positions[faces[:, 0]] - circumcenters, axis=1)
            if len(faces)
            else np.zeros(0)
        )
        return cls(
            h=float(h),
            circumdiameter=float(h if circumdiameter is None else circumdiameter),
            positions=positions,
            edges=edges,
            edge_lengths=np.asarray(edge_lengths, dtype=float),
            dual_lengths=np.asarray(dual_lengths, dtype=float),
            dual_endpoints=np.asarray(dual_endpoints, dtype=float).reshape(-1, 2, 2),
            faces=faces,
            circumcenters=circumcenters,
            circumradii=radii,
            dual_areas=np.asarray(dual_areas, dtype=float),
            interior=np.asarray(interior, dtype=bool),
            spec=spec,
        )

    # -- queries ------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n_vertices else 0

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def point(self, u: int) -> Point:
        x, y = self.positions[u]
        return Point(float(x), float(y))

    def face(self, i: int) -> Face:
        cx, cy = self.circumcenters[i]
        return Face(
            vertex_cycle=tuple(int(v) for v in self.faces[i]),
            circumcenter=Point(float(cx), float(cy)),
            circumradius=float(self.circumradii[i]),
        )

    def adjacency_matrix(self, weighted: bool = False) -> sparse.csr_matrix:
        data = self.edge_lengths[self.slot_edge] if weighted else np.ones(len(self.indices))
        n = self.n_vertices
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        """Combinatorial distance from each vertex to the nearest non-interior vertex."""
        outside = np.flatnonzero(~self.interior)
        if len(outside) == 0:
            return np.full(self.n_vertices, np.inf)
        return csgraph.dijkstra(
            self.adjacency_matrix(), directed=False, unweighted=True, indices=outside, min_only=True
        )

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.positions)


@dataclass(frozen=True)
class ValidationReport:
    tol: float
    face_deviation: np.ndarray
    center_inside: np.ndarray
    max_orthogonality_defect: float
    max_edge_ratio: float
    max_dual_ratio: float

    @property
    def max_deviation(self) -> float:
        return float(self.face_deviation.max()) if len(self.face_deviation) else 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol and bool(np.all(self.center_inside))

    def failing_faces(self) -> np.ndarray:
        return np.flatnonzero((self.face_deviation > self.tol) | ~self.center_inside)

    def write_csv(self, path: Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["face", "deviation", "center_inside"])
            for i, (dev, inside) in enumerate(zip(self.face_deviation, self.center_inside)):
                writer.writerow([i, repr(float(dev)), int(bool(inside))])


@dataclass(frozen=True)
class AssumptionReport:
    c_p: float
    c_d: float
    M: int
    kappa_empirical: float
    pairs_checked: int
    exhaustive: bool

    def as_dict(self) -> dict[str, Any]:
        return {
            "c_p": self.c_p,
            "c_d": self.c_d,
            "M": self.M,
            "kappa_empirical": self.kappa_empirical,
            "pairs_checked": self.pairs_checked,
            "exhaustive": self.exhaustive,
        }


def validate_isoradial(g: IsoradialGraph, tol: float | None = None) -> ValidationReport:
    if tol is None:
        tol = constants.GEOMETRY_TOL * g.circumdiameter
    corners = g.positions[g.faces]
    if len(g.faces):
        radial = np.linalg.norm(corners - g.circumcenters[:, None, :], axis=2)
        deviation = np.abs(radial - 0.5 * g.circumdiameter).max(axis=1)
        inside = _strictly_inside(corners, g.circumcenters)
    else:
        deviation = np.zeros(0)
        inside = np.zeros(0, dtype=bool)

    closed = np.isfinite(g.dual_lengths)
    orthogonality = 0.0
    if np.any(closed):
        primal = g.positions[g.edges[closed, 1]] - g.positions[g.edges[closed, 0]]
        dual = g.dual_endpoints[closed, 1] - g.dual_endpoints[closed, 0]
        norms = np.linalg.norm(primal, axis=1) * np.linalg.norm(dual, axis=1)
        cosines = np.abs(np.einsum("ij,ij->i", primal, dual)) / np.where(norms > 0, norms, 1.0)
        orthogonality = float(cosines.max())
    max_dual = float(np.nanmax(g.dual_lengths)) if np.any(closed) else 0.0
    return ValidationReport(
        tol=float(tol),
        face_deviation=deviation,
        center_inside=inside,
        max_orthogonality_defect=orthogonality,
        max_edge_ratio=float(g.edge_lengths.max() / g.circumdiameter) if g.n_edges else 0.0,
        max_dual_ratio=max_dual / g.circumdiameter,
    )


def check_assumptions(g: IsoradialGraph, *, sample_sources: int = 64, seed: int = 0) -> AssumptionReport:
    if g.n_edges == 0:
        raise GeometryError("Cannot measure geometric constants of a graph with no edges.")
    c_p = float(g.edge_lengths.min() / g.circumdiameter)
    closed = np.isfinite(g.dual_lengths)
    c_d = float(g.dual_lengths[closed].min() / g.circumdiameter) if np.any(closed) else math.nan

    inner = np.flatnonzero(g.interior)
    exhaustive = len(inner) <= constants.EXHAUSTIVE_PAIR_LIMIT
    if exhaustive:
        sources = inner
    else:
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(inner, size=min(sample_sources, len(inner)), replace=False))

    kappa = 1.0
    pairs = 0
    if len(sources) > 1:
        dist = csgraph.dijkstra(g.adjacency_matrix(weighted=True), directed=False, indices=sources)
        for row, s in zip(dist, sources):
            euclid = np.linalg.norm(g.positions[inner] - g.positions[s], axis=1)
            mask = euclid > 0
            ratios = row[inner][mask] / euclid[mask]
            pairs += int(mask.sum())
            if len(ratios):
                kappa = max(kappa, float(ratios.max()))
    logger.debug("Measured c_p=%.6g c_d=%.6g kappa=%.6g over %d pairs", c_p, c_d, kappa, pairs)
    return AssumptionReport(
        c_p=c_p, c_d=c_d, M=g.max_degree, kappa_empirical=kappa, pairs_checked=pairs, exhaustive=exhaustive
    )


def project(g: IsoradialGraph, p: Point | complex | Sequence[float]) -> int:
    """Closest vertex to ``p``; ties go to the smallest (x, y, id)."""
    if g.n_vertices == 0:
        raise GeometryError("Cannot project onto an empty graph.")
    target = Point.of(p).as_array()
    nearest, _ = g._tree.query(target)
    candidates = np.asarray(g._tree.query_ball_point(target, nearest * (1.0 + 1e-12)), dtype=np.int64)
    if len(candidates) == 0:
        _, idx = g._tree.query(target)
        return int(idx)
    pts = g.positions[candidates]
    best = np.lexsort((candidates, pts[:, 1], pts[:, 0]))[0]
    return int(candidates[best])


def bfs_distances(g: IsoradialGraph, u: int, limit: float = np.inf) -> np.ndarray:
    return csgraph.dijkstra(g.adjacency_matrix(), directed=False, unweighted=True, indices=u, limit=limit)


def weighted_distance(g: IsoradialGraph, u: int, v: int) -> float:
    if u == v:
        return 0.0
    dist = csgraph.dijkstra(g.adjacency_matrix(weighted=True), directed=False, indices=u)[v]
    if not np.isfinite(dist):
        raise GeometryError(f"Vertices {u} and {v} lie in different components.")
    return float(dist)


def combinatorial_distance(g: IsoradialGraph, u: int, v: int) -> int:
    if u == v:
        return 0
    dist = bfs_distances(g, u)[v]
    if not np.isfinite(dist):
        raise GeometryError(f"Vertices {u} and {v} lie in different components.")
    return int(dist)


def combinatorial_ball(g: IsoradialGraph, u: int, n: int) -> np.ndarray:
    if n < 0:
        raise GeometryError(f"Ball radius must be nonnegative, got {n}.")
    dist = bfs_distances(g, u, limit=n)
    ball = np.flatnonzero(dist <= n)
    if not np.all(g.interior[ball]):
        raise GeometryError(
            f"Ball of radius {n} around vertex {u} is clipped by the window boundary.",
            details={"vertex": u, "radius": n, "boundary_distance": float(g.boundary_distance[u])},
        )
    return ball


def signed_face_areas(g: IsoradialGraph) -> np.ndarray:
    return _signed_areas(g.positions[g.faces])


def dual_cell_areas(g: IsoradialGraph, vertices: Iterable[int]) -> np.ndarray:
    """Shoelace area of the polygon of circumcenters around each vertex."""
    vertices = np.asarray(list(vertices), dtype=np.int64)
    flat = g.faces.ravel()
    order = np.argsort(flat, kind="stable")
    owner = order // g.faces.shape[1]
    lo = np.searchsorted(flat[order], vertices, side="left")
    hi = np.searchsorted(flat[order], vertices, side="right")
    out = []
    for u, a, b in zip(vertices, lo, hi):
        centers = g.circumcenters[owner[a:b]]
        rel = centers - g.positions[u]
        centers = centers[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]
        x, y = centers[:, 0], centers[:, 1]
        out.append(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    return np.asarray(out)


def _signed_areas(corners: np.ndarray) -> np.ndarray:
    x = corners[..., 0]
    y = corners[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - y * np.roll(x, -1, axis=-1), axis=-1)


def _circumcenters(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    bx, by = (b - a).T
    cx, cy = (c - a).T
    d = 2.0 * (bx * cy - by * cx)
    if np.any(d == 0):
        raise GeometryError("Degenerate face: its first three vertices are collinear.")
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return a + np.stack([ux, uy], axis=1)


def _strictly_inside(corners: np.ndarray, centers: np.ndarray) -> np.ndarray:
    edge = np.roll(corners, -1, axis=1) - corners
    rel = centers[:, None, :] - corners
    cross = edge[..., 0] * rel[..., 1] - edge[..., 1] * rel[..., 0]
    scale = np.linalg.norm(edge, axis=2) ** 2
    return np.all(cross > 1e-12 * scale, axis=1)
