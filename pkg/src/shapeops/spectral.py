"""Cotangent stiffness, lumped mass, and the truncated eigenbasis.

The generalized problem W phi = lambda A phi is solved densely after the
symmetrizing substitution B = A^(-1/2) W A^(-1/2), which keeps the output
deterministic and is fast at the mesh sizes this package targets
(a few thousand vertices).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import (
    DimensionMismatch,
    EigensolveFailure,
    KTooLarge,
    NonFiniteCotangent,
    ParseError,
)
from .meshio import TriMesh, vertex_areas

_FLOAT_FMT = "%.17g"


@dataclass
class SpectralBasis:
    """Mass vector, stiffness matrix and the k smallest eigenpairs of a mesh.

    Attributes
    ----------
    mass : np.ndarray
        (n,) diagonal of the lumped area matrix A.
    eigenvalues : np.ndarray
        (k,) ascending, non-negative.
    eigenfunctions : np.ndarray
        (n, k) columns orthonormal with respect to A.
    stiffness : scipy.sparse matrix or None
        (n, n) cotangent stiffness W; None for bases restored from file.
    """

    mass: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    stiffness: scipy.sparse.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.eigenfunctions.shape[0]

    @property
    def k(self) -> int:
        return self.eigenfunctions.shape[1]

    def truncated(self, k: int) -> "SpectralBasis":
        """Leading-k slice of this basis (shares the underlying arrays)."""
        if not 1 <= k <= self.k:
            raise KTooLarge(f"k={k} not in [1, {self.k}]")
        return SpectralBasis(
            mass=self.mass,
            eigenvalues=self.eigenvalues[:k],
            eigenfunctions=self.eigenfunctions[:, :k],
            stiffness=self.stiffness,
        )


def cotan_stiffness(mesh: TriMesh, clamp_negative: bool = False) -> scipy.sparse.csr_matrix:
    """Cotangent stiffness matrix W.

    Off-diagonal entries are -w_ij with w_ij half the sum of the
    cotangents of the angles opposite edge (i, j); the diagonal makes
    every row sum to zero. Boundary edges contribute their single
    cotangent term.

    Parameters
    ----------
    mesh : TriMesh
    clamp_negative : bool, optional
        Clamp summed edge weights at zero (off by default; the standard
        scheme keeps negative weights).

    Raises
    ------
    NonFiniteCotangent
        If an angle is numerically 0 or pi.
    """
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    # corner c is opposite edge (a, b)
    for c, a, b in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        ea = v[f[:, a]] - v[f[:, c]]
        eb = v[f[:, b]] - v[f[:, c]]
        cross = np.linalg.norm(np.cross(ea, eb), axis=1)
        cot = np.einsum("ij,ij->i", ea, eb) / cross
        if not np.isfinite(cot).all():
            raise NonFiniteCotangent("corner angle numerically 0 or pi")
        half = 0.5 * cot
        rows.extend([f[:, a], f[:, b]])
        cols.extend([f[:, b], f[:, a]])
        vals.extend([half, half])
    weights = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    if clamp_negative:
        weights.data = np.maximum(weights.data, 0.0)
    diag = np.asarray(weights.sum(axis=1)).ravel()
    return (scipy.sparse.diags(diag) - weights).tocsr()


def eigenbasis(mesh: TriMesh, k: int, clamp_negative: bool = False) -> SpectralBasis:
    """k smallest generalized eigenpairs of (W, A).

    Eigenvector signs are fixed so the entry of largest magnitude in each
    column is positive, making the output deterministic.

    Raises
    ------
    KTooLarge
        If k is outside [1, n_vertices].
    EigensolveFailure
        If the dense solver fails or returns eigenvalues significantly
        below zero.
    """
    n = mesh.n_vertices
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} not in [1, {n}]")
    mass = vertex_areas(mesh)
    stiffness = cotan_stiffness(mesh, clamp_negative=clamp_negative)
    inv_sqrt = 1.0 / np.sqrt(mass)
    sym = stiffness.toarray() * np.outer(inv_sqrt, inv_sqrt)
    sym = 0.5 * (sym + sym.T)
    try:
        vals, vecs = scipy.linalg.eigh(sym, subset_by_index=(0, k - 1))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise EigensolveFailure(str(exc)) from exc
    scale = max(abs(vals[-1]), abs(vals[0]))
    if vals[0] < -1e-8 * scale:
        raise EigensolveFailure(f"negative eigenvalue {vals[0]} in a PSD pencil")
    vals = np.maximum(vals, 0.0)
    phi = inv_sqrt[:, None] * vecs
    # sign convention: largest-magnitude entry of each column positive
    extremum = np.take_along_axis(phi, np.abs(phi).argmax(axis=0)[None, :], axis=0)[0]
    phi = phi * np.where(extremum < 0.0, -1.0, 1.0)
    return SpectralBasis(mass=mass, eigenvalues=vals, eigenfunctions=phi, stiffness=stiffness)


def project(basis: SpectralBasis, f: np.ndarray) -> np.ndarray:
    """Coefficients of f in the basis: Phi^T A f.

    Accepts a single function (n,) or several stacked as columns (n, m).
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != basis.n:
        raise DimensionMismatch(f"function has {f.shape[0]} values, mesh has {basis.n}")
    if f.ndim == 1:
        return basis.eigenfunctions.T @ (basis.mass * f)
    return basis.eigenfunctions.T @ (basis.mass[:, None] * f)


def unproject(basis: SpectralBasis, a: np.ndarray) -> np.ndarray:
    """Function values Phi a from coefficients a ((k,) or (k, m))."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != basis.k:
        raise DimensionMismatch(f"coefficients have {a.shape[0]} entries, basis has {basis.k}")
    return basis.eigenfunctions @ a


def save_spectral(basis: SpectralBasis, path) -> None:
    """Write a basis as text: header, eigenvalues, eigenfunctions, mass.

    Format: "SPECTRAL n k" on the first line, one line of k eigenvalues,
    n lines of k eigenfunction values, one line of n mass entries.
    The stiffness matrix is not stored.
    """
    lines = [f"SPECTRAL {basis.n} {basis.k}"]
    lines.append(" ".join(_FLOAT_FMT % x for x in basis.eigenvalues))
    for row in basis.eigenfunctions:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    lines.append(" ".join(_FLOAT_FMT % x for x in basis.mass))
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_spectral(path) -> SpectralBasis:
    """Read a basis written by save_spectral. The stiffness field is None."""
    with open(os.fspath(path), "r") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = lines[0].split()
    if len(header) != 3 or header[0] != "SPECTRAL":
        raise ParseError("missing SPECTRAL header")
    try:
        n, k = int(header[1]), int(header[2])
        vals = np.array(lines[1].split(), dtype=np.float64)
        phi = np.array([ln.split() for ln in lines[2 : 2 + n]], dtype=np.float64)
        mass = np.array(lines[2 + n].split(), dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed SPECTRAL file: {exc}") from exc
    if vals.shape != (k,) or phi.shape != (n, k) or mass.shape != (n,):
        raise ParseError("SPECTRAL payload does not match header dimensions")
    return SpectralBasis(mass=mass, eigenvalues=vals, eigenfunctions=phi, stiffness=None)
