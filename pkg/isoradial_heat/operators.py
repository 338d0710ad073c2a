"""Geometric edge weights and the sparse heat generators built from them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse

from . import constants
from .errors import GeometryError
from .geometry import IsoradialGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightConstants:
    c_p: float
    c_d: float
    M: int
    kappa1: float
    kappa2: float
    alpha1: float
    alpha2: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "c_p": self.c_p,
            "c_d": self.c_d,
            "M": self.M,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
        }


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Per-edge ``omega``, per-vertex ``m``, ``A``, ``lam`` and per-slot ``mu``.

    ``mu`` is indexed like ``graph.indices``: slot ``k`` in row ``u`` holds
    ``omega_uv / A_u``. Values that need a complete dual cell are ``nan`` off
    the interior.
    """

    h: float
    omega: np.ndarray
    m: np.ndarray
    A: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    consts: WeightConstants

    @property
    def mu_max(self) -> float:
        return self.consts.alpha2 / self.h**2

    @property
    def mu_min(self) -> float:
        return self.consts.alpha1 / self.h**2


@dataclass(frozen=True, eq=False)
class SparseGenerator:
    matrix: sparse.csr_matrix
    rate: float
    variant: str
    measure: np.ndarray
    interior: np.ndarray
    boundary_distance: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def compute_weights(g: IsoradialGraph) -> WeightSet:
    if g.n_edges == 0:
        raise GeometryError("Cannot compute weights on a graph with no edges.")
    if np.any(g.edge_lengths <= 0):
        bad = int(np.flatnonzero(g.edge_lengths <= 0)[0])
        raise GeometryError(f"Edge {bad} has zero length.", details={"edge": bad})
    inner = g.interior
    if not np.any(inner):
        raise GeometryError("The window has no interior vertices.")
    areas = np.where(inner, g.dual_areas, np.nan)
    if np.any(~(areas[inner] > 0)):
        raise GeometryError("Interior vertices must have positive dual area.")

    omega = g.dual_lengths / g.edge_lengths
    n = g.n_vertices
    src = np.repeat(np.arange(n), g.degrees)
    slot_omega = omega[g.slot_edge]
    m = np.bincount(src, weights=np.nan_to_num(slot_omega), minlength=n)
    m = np.where(inner, m, np.nan)
    lam = m / (2.0 * areas)
    mu = slot_omega / areas[src]

    h2 = g.h**2
    closed = np.isfinite(g.dual_lengths)
    inner_mu = mu[inner[src]]
    consts = WeightConstants(
        c_p=float(g.edge_lengths.min() / g.circumdiameter),
        c_d=float(g.dual_lengths[closed].min() / g.circumdiameter) if np.any(closed) else float("nan"),
        M=g.max_degree,
        kappa1=float(np.min(areas[inner]) / h2),
        kappa2=float(np.max(areas[inner]) / h2),
        alpha1=float(np.min(inner_mu) * h2),
        alpha2=float(np.max(inner_mu) * h2),
    )
    logger.debug("Weight constants: %s", consts)
    return WeightSet(h=g.h, omega=omega, m=m, A=areas, lam=lam, mu=mu, consts=consts)


def weight_bound_margins(
    g: IsoradialGraph, w: WeightSet, reference: WeightConstants | None = None
) -> dict[str, float]:
    """Signed margins of the weight bounds; every value is >= 0 when they hold.

    ``reference`` supplies c_p, c_d and M. Without it they are measured on ``g``
    itself, which makes the lower bounds hold trivially.
    """
    c = reference if reference is not None else w.consts
    closed = np.isfinite(w.omega)
    omega = w.omega[closed]
    inner = g.interior
    m = w.m[inner]
    slack = 1e-12
    return {
        "omega_lower": float(np.min(omega) - c.c_d * (1 - slack)),
        "omega_upper": float((1.0 / c.c_p) * (1 + slack) - np.max(omega)),
        "m_lower": float(np.min(m) - c.c_d * (1 - slack)),
        "m_upper": float((c.M / c.c_p) * (1 + slack) - np.max(m)),
        "edge_length": float(g.circumdiameter * (1 + 1e-9) - np.max(g.edge_lengths)),
        "dual_length": float(g.circumdiameter * (1 + 1e-9) - np.max(g.dual_lengths[closed])),
    }


def assemble_generator(g: IsoradialGraph, w: WeightSet, variant: str = "variable-speed") -> SparseGenerator:
    if variant not in constants.VARIANTS:
        raise ValueError(f"Unknown generator variant {variant!r}; expected one of {constants.VARIANTS}.")
    n = g.n_vertices
    src = np.repeat(np.arange(n), g.degrees)
    measure = w.A if variant == "variable-speed" else w.m
    active = g.interior[src]
    off = np.zeros(len(g.indices))
    off[active] = w.omega[g.slot_edge[active]] / (2.0 * measure[src[active]])

    offdiag = sparse.csr_matrix((off, g.indices, g.indptr), shape=(n, n))
    diag = -np.bincount(src, weights=off, minlength=n)
    matrix = (offdiag + sparse.diags(diag)).tocsr()
    matrix.sort_indices()
    rate = float(-diag.min()) if n else 0.0
    logger.debug("Assembled %s generator: n=%d nnz=%d rate=%.6g", variant, n, matrix.nnz, rate)
    return SparseGenerator(
        matrix=matrix,
        rate=rate,
        variant=variant,
        measure=np.where(g.interior, measure, np.nan),
        interior=g.interior.copy(),
        boundary_distance=g.boundary_distance,
    )


def apply_laplacian(g: IsoradialGraph, w: WeightSet, f: np.ndarray, u: int) -> float:
    if not g.interior[u]:
        raise GeometryError(f"Vertex {u} is on the window boundary; its dual cell is incomplete.")
    f = np.asarray(f, dtype=float)
    lo, hi = g.indptr[u], g.indptr[u + 1]
    diffs = f[g.indices[lo:hi]] - f[u]
    return float(np.dot(w.omega[g.slot_edge[lo:hi]], diffs) / w.A[u])


def laplacian_matrix(g: IsoradialGraph, w: WeightSet) -> sparse.csr_matrix:
    """Rows of ``Delta_h`` for interior vertices; other rows are zero."""
    gen = assemble_generator(g, w, "variable-speed")
    return (2.0 * gen.matrix).tocsr()


def export_generator(gen: SparseGenerator, path: Path) -> Path:
    """Write ``row col value`` triplets after a three-line ``#`` header."""
    coo = gen.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    triplets = np.column_stack([coo.row[order], coo.col[order], coo.data[order]])
    header = "\n".join(
        [
            "isoradial-heat sparse generator",
            f"variant {gen.variant}",
            f"dimension {gen.dimension} nnz {coo.nnz} rate {gen.rate!r}",
        ]
    )
    np.savetxt(Path(path), triplets, fmt=["%d", "%d", "%.17g"], header=header, comments="# ")
    return Path(path)
