"""Extrinsic inner products and coordinate recovery.

Two rotation-invariant encodings of vertex positions: the rank-3 Gram
operator of the coordinate functions, from which the embedding can be
recovered up to an orthogonal transform, and a full-rank complete-graph
Laplacian built from area-weighted squared pairwise distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NegativeSpectrum
from .meshio import TriMesh, vertex_areas
from .spectral import SpectralBasis


@dataclass
class GramOperator:
    """Basis-projected Gram matrix of the coordinate functions, rank <= 3."""

    matrix: np.ndarray


@dataclass
class ExtrinsicInner:
    """Dense (n, n) complete-graph Laplacian of area-weighted squared
    pairwise distances. PSD with a single near-zero eigenvalue."""

    matrix: np.ndarray


def gram_operator(mesh: TriMesh, basis: SpectralBasis) -> GramOperator:
    """Project the coordinate Gram matrix into the basis.

    Computed as P P^T with P = Phi^T A X, so the result is symmetric PSD
    of rank at most 3 by construction.
    """
    if basis.n != mesh.n_vertices:
        raise DimensionMismatch(
            f"basis has {basis.n} vertices, mesh has {mesh.n_vertices}"
        )
    p = basis.eigenfunctions.T @ (basis.mass[:, None] * mesh.vertices)
    return GramOperator(p @ p.T)


def euclidean_inner(mesh: TriMesh) -> ExtrinsicInner:
    """Complete-graph Laplacian of squared distances weighted by vertex areas.

    Entry (i, j), i != j, of the underlying weight matrix is
    ||v_i - v_j||^2 a_i a_j; the Laplacian has zero row sums and is PSD.
    """
    v = mesh.vertices
    a = vertex_areas(mesh)
    sq_norms = np.einsum("ij,ij->i", v, v)
    sq_dist = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (v @ v.T)
    np.maximum(sq_dist, 0.0, out=sq_dist)
    np.fill_diagonal(sq_dist, 0.0)
    weights = sq_dist * np.outer(a, a)
    lap = np.diag(weights.sum(axis=1)) - weights
    return ExtrinsicInner(lap)


def projected_inner(basis: SpectralBasis, inner: ExtrinsicInner) -> np.ndarray:
    """Inner-product matrix expressed in the basis: Phi^T E Phi (k, k)."""
    if inner.matrix.shape[0] != basis.n:
        raise DimensionMismatch(
            f"inner product is {inner.matrix.shape[0]}^2, basis has {basis.n} vertices"
        )
    return (basis.eigenfunctions.T @ inner.matrix) @ basis.eigenfunctions


def recover_from_gram(gram: GramOperator, basis: SpectralBasis) -> np.ndarray:
    """Recover vertex coordinates from a Gram operator.

    Returns Phi U3 sqrt(S3) built from the top three eigenpairs of the
    Gram matrix. This equals the basis projection of the original
    coordinates up to an orthogonal 3x3 transform, and is exact at full
    basis. Eigenvalues slightly below zero (floating-point noise, down to
    -1e-8 of the largest) are clamped; anything lower raises.

    Raises
    ------
    NegativeSpectrum
        If the Gram matrix is not PSD within tolerance.
    """
    g = gram.matrix
    if g.shape[0] != basis.k:
        raise DimensionMismatch(f"gram is {g.shape[0]}^2, basis has k={basis.k}")
    sym = 0.5 * (g + g.T)
    vals, vecs = np.linalg.eigh(sym)
    top = max(vals[-1], 0.0)
    if vals[0] < -1e-8 * top:
        raise NegativeSpectrum(f"gram eigenvalue {vals[0]} below -1e-8 * {top}")
    vals = np.maximum(vals, 0.0)
    order = np.argsort(vals)[::-1][: min(3, basis.k)]
    coords = basis.eigenfunctions @ (vecs[:, order] * np.sqrt(vals[order]))
    if coords.shape[1] < 3:
        coords = np.pad(coords, ((0, 0), (0, 3 - coords.shape[1])))
    return coords
