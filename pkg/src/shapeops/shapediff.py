"""Shape-difference operators: area, conformal, and extrinsic.

Each operator compares an inner product on a target shape with one on a
base shape through a functional map C, as K_base^+ (C^T K_target C).
The result is a small square matrix anchored to the base shape, invariant
to rigid motions of either mesh.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParseError
from .extrinsic import euclidean_inner, projected_inner
from .fmap import FunctionalMap
from .meshio import TriMesh
from .spectral import SpectralBasis

KIND_AREA = "area"
KIND_CONFORMAL = "conformal"
KIND_EXTRINSIC = "extrinsic"
KINDS = (KIND_AREA, KIND_CONFORMAL, KIND_EXTRINSIC)

DEFAULT_PINV_RTOL = 1e-10

_FLOAT_FMT = "%.17g"


@dataclass
class ShapeDifference:
    """Square operator matrix tagged with its kind and base shape id."""

    kind: str
    matrix: np.ndarray
    base_id: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch(f"difference matrix must be square, got {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise ValueError("difference matrix has non-finite entries")

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def _pinv(m: np.ndarray, rtol: float) -> np.ndarray:
    return np.linalg.pinv(m, rcond=rtol)


def generic_difference(base_inner: np.ndarray, target_inner: np.ndarray,
                       c: FunctionalMap, pinv_rtol: float = DEFAULT_PINV_RTOL,
                       kind: str = KIND_AREA, base_id: str = "") -> ShapeDifference:
    """Difference operator for arbitrary PSD inner products.

    Computes pinv(base_inner) @ (C^T target_inner C); singular values of
    the base inner product below pinv_rtol times the largest are treated
    as zero.
    """
    base_inner = np.asarray(base_inner, dtype=np.float64)
    target_inner = np.asarray(target_inner, dtype=np.float64)
    if base_inner.shape != (c.source_dim, c.source_dim):
        raise DimensionMismatch(
            f"base inner product {base_inner.shape} incompatible with map source {c.source_dim}"
        )
    if target_inner.shape != (c.target_dim, c.target_dim):
        raise DimensionMismatch(
            f"target inner product {target_inner.shape} incompatible with map target {c.target_dim}"
        )
    pulled = c.matrix.T @ target_inner @ c.matrix
    return ShapeDifference(kind, _pinv(base_inner, pinv_rtol) @ pulled, base_id)


def area_difference(c: FunctionalMap, base_id: str = "") -> ShapeDifference:
    """L2 (area-based) difference C^T C; symmetric PSD by construction."""
    return ShapeDifference(KIND_AREA, c.matrix.T @ c.matrix, base_id)


def conformal_difference(base_eigenvalues: np.ndarray, target_eigenvalues: np.ndarray,
                         c: FunctionalMap, pinv_rtol: float = DEFAULT_PINV_RTOL,
                         base_id: str = "") -> ShapeDifference:
    """H1 (conformal) difference pinv(L_base) C^T L_target C.

    The base Laplacian eigenvalues enter as a diagonal pseudo-inverse, so
    a zero base eigenvalue (constant eigenfunction on a closed mesh)
    yields a structurally zero first row.
    """
    lam0 = np.asarray(base_eigenvalues, dtype=np.float64)
    lami = np.asarray(target_eigenvalues, dtype=np.float64)
    if lam0.shape != (c.source_dim,):
        raise DimensionMismatch(f"{lam0.shape[0]} base eigenvalues for map source {c.source_dim}")
    if lami.shape != (c.target_dim,):
        raise DimensionMismatch(f"{lami.shape[0]} target eigenvalues for map target {c.target_dim}")
    cutoff = pinv_rtol * lam0.max(initial=0.0)
    inv0 = np.where(lam0 > cutoff, 1.0, 0.0) / np.where(lam0 > cutoff, lam0, 1.0)
    pulled = c.matrix.T @ (lami[:, None] * c.matrix)
    return ShapeDifference(KIND_CONFORMAL, inv0[:, None] * pulled, base_id)


def extrinsic_difference(base_mesh: TriMesh, base_basis: SpectralBasis,
                         target_mesh: TriMesh, target_basis: SpectralBasis,
                         c: FunctionalMap, pinv_rtol: float = DEFAULT_PINV_RTOL,
                         base_id: str = "") -> ShapeDifference:
    """Extrinsic difference from the area-weighted squared-distance Laplacians.

    Both inner products are built densely, projected into their bases, and
    combined as pinv(M_base) (C^T M_target C).
    """
    if base_basis.k != c.source_dim or target_basis.k != c.target_dim:
        raise DimensionMismatch(
            f"map is {c.target_dim}x{c.source_dim}, bases have k={target_basis.k}, {base_basis.k}"
        )
    m_base = projected_inner(base_basis, euclidean_inner(base_mesh))
    m_target = projected_inner(target_basis, euclidean_inner(target_mesh))
    return generic_difference(m_base, m_target, c, pinv_rtol, KIND_EXTRINSIC, base_id)


def save_sdiff(diff: ShapeDifference, path) -> None:
    """Write "SDIFF kind k base_id" followed by the row-major matrix."""
    base_id = diff.base_id if diff.base_id else "-"
    lines = [f"SDIFF {diff.kind} {diff.k} {base_id}"]
    for row in diff.matrix:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sdiff(path) -> ShapeDifference:
    with open(os.fspath(path), "r") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = lines[0].split()
    if len(header) != 4 or header[0] != "SDIFF":
        raise ParseError("missing SDIFF header")
    kind = header[1]
    try:
        k = int(header[2])
        matrix = np.array([ln.split() for ln in lines[1 : 1 + k]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed SDIFF file: {exc}") from exc
    if matrix.shape != (k, k):
        raise ParseError("SDIFF payload does not match header dimension")
    base_id = "" if header[3] == "-" else header[3]
    return ShapeDifference(kind, matrix, base_id)
