"""Functional maps between spectral bases.

A functional map C transports coefficient vectors from a source basis to
a target basis. Built from a point-to-point correspondence it reads
C = Phi_t^T A_t P, where row p of P is the source eigenfunction row at
the matched vertex; the permutation-like matrix is never materialized.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, ParseError
from .spectral import SpectralBasis

_FLOAT_FMT = "%.17g"


@dataclass
class PointToPointMap:
    """Vertex correspondence: entry p is the source-mesh index matched to
    target vertex p (the map goes from the target shape to the source)."""

    assignment: np.ndarray

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.ndim != 1:
            raise DimensionMismatch("assignment must be a flat index vector")

    def __len__(self) -> int:
        return len(self.assignment)


@dataclass
class FunctionalMap:
    """Matrix of shape (target_dim, source_dim) acting on coefficients."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DimensionMismatch("functional map must be a 2-d matrix")
        if not np.isfinite(self.matrix).all():
            raise ValueError("functional map has non-finite entries")

    @property
    def source_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def target_dim(self) -> int:
        return self.matrix.shape[0]


def identity_p2p(n: int) -> PointToPointMap:
    """Identity correspondence for meshes sharing a vertex order."""
    return PointToPointMap(np.arange(n, dtype=np.int64))


def fmap_from_p2p(basis_src: SpectralBasis, basis_tgt: SpectralBasis,
                  p2p: PointToPointMap) -> FunctionalMap:
    """Functional map induced by a vertex correspondence.

    Parameters
    ----------
    basis_src : SpectralBasis
        Basis of the source shape (k0 functions).
    basis_tgt : SpectralBasis
        Basis of the target shape (k1 functions).
    p2p : PointToPointMap
        For each target vertex, the matched source vertex.

    Returns
    -------
    FunctionalMap
        (k1, k0) matrix.
    """
    a = p2p.assignment
    if len(a) != basis_tgt.n:
        raise DimensionMismatch(
            f"correspondence has {len(a)} entries, target mesh has {basis_tgt.n}"
        )
    if len(a) and (a.min() < 0 or a.max() >= basis_src.n):
        raise IndexOutOfRange(f"correspondence indices must lie in [0, {basis_src.n})")
    pulled = basis_src.eigenfunctions[a]  # (n_tgt, k0)
    return FunctionalMap(basis_tgt.eigenfunctions.T @ (basis_tgt.mass[:, None] * pulled))


def fmap_from_matrix(basis_src: SpectralBasis, basis_tgt: SpectralBasis,
                     soft_map: np.ndarray) -> FunctionalMap:
    """Functional map induced by a dense (soft) correspondence matrix.

    soft_map has shape (n_tgt, n_src); rows are expected to be convex
    weights. Rows that do not sum to 1 within 1e-6 only trigger a warning,
    since general functional-map matrices are still meaningful.
    """
    soft_map = np.asarray(soft_map, dtype=np.float64)
    if soft_map.shape != (basis_tgt.n, basis_src.n):
        raise DimensionMismatch(
            f"soft map shape {soft_map.shape} != ({basis_tgt.n}, {basis_src.n})"
        )
    row_sums = soft_map.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        warnings.warn("soft correspondence rows do not sum to 1", stacklevel=2)
    pulled = soft_map @ basis_src.eigenfunctions
    return FunctionalMap(basis_tgt.eigenfunctions.T @ (basis_tgt.mass[:, None] * pulled))


def compose(c01: FunctionalMap, c12: FunctionalMap) -> FunctionalMap:
    """Composite map C12 C01 taking basis 0 coefficients to basis 2."""
    if c12.source_dim != c01.target_dim:
        raise DimensionMismatch(
            f"cannot compose: inner dims {c01.target_dim} vs {c12.source_dim}"
        )
    return FunctionalMap(c12.matrix @ c01.matrix)


def save_fmap(fmap: FunctionalMap, path) -> None:
    """Write "FMAP k1 k0" followed by the row-major matrix."""
    lines = [f"FMAP {fmap.target_dim} {fmap.source_dim}"]
    for row in fmap.matrix:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_fmap(path) -> FunctionalMap:
    with open(os.fspath(path), "r") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = lines[0].split()
    if len(header) != 3 or header[0] != "FMAP":
        raise ParseError("missing FMAP header")
    try:
        k1, k0 = int(header[1]), int(header[2])
        matrix = np.array([ln.split() for ln in lines[1 : 1 + k1]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed FMAP file: {exc}") from exc
    if matrix.shape != (k1, k0):
        raise ParseError("FMAP payload does not match header dimensions")
    return FunctionalMap(matrix)


def save_p2p(p2p: PointToPointMap, path) -> None:
    """One 0-based source index per line."""
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(str(int(i)) for i in p2p.assignment) + "\n")


def load_p2p(path) -> PointToPointMap:
    with open(os.fspath(path), "r") as fh:
        tokens = fh.read().split()
    try:
        return PointToPointMap(np.array(tokens, dtype=np.int64))
    except ValueError as exc:
        raise ParseError(f"malformed correspondence file: {exc}") from exc
