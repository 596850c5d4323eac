"""Operator algebra on shape differences.

Pseudo-inversion, principal matrix logarithm, multiplicative and linear
interpolation, functoriality-based transport, and analogy synthesis.
Difference matrices are in general non-symmetric but similar to PSD
matrices, so the logarithm goes through a (possibly complex)
eigendecomposition and fails loudly when the spectrum is genuinely
complex or the eigenvectors are too ill-conditioned.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import ComplexBranch, DimensionMismatch, NonDiagonalizable, SingularMap
from .shapediff import DEFAULT_PINV_RTOL, ShapeDifference

DEFAULT_EIG_FLOOR = 1e-8

MULTIPLICATIVE = "multiplicative"
LINEAR = "linear"
SCHEMES = (MULTIPLICATIVE, LINEAR)


def _as_matrix(d) -> np.ndarray:
    if isinstance(d, ShapeDifference):
        return d.matrix
    return np.asarray(d, dtype=np.float64)


def pseudo_inverse(m: np.ndarray, rel_tol: float = DEFAULT_PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below rel_tol times
    the largest are treated as zero."""
    return np.linalg.pinv(_as_matrix(m), rcond=rel_tol)


def matrix_log(d, eig_floor: float = DEFAULT_EIG_FLOOR) -> np.ndarray:
    """Principal logarithm via eigendecomposition.

    Eigenvalues with real part at or below eig_floor are clamped to
    eig_floor first, so the structural zero eigenvalue of conformal and
    extrinsic differences does not send the log to -inf.

    Raises
    ------
    NonDiagonalizable
        If the eigenvector matrix condition number exceeds 1e10.
    ComplexBranch
        If eigenvalues have an imaginary part beyond 1e-8 of the spectral
        radius, or the reassembled log is not real within tolerance.
    """
    m = _as_matrix(d)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix_log needs a square matrix, got {m.shape}")
    lam, vecs = np.linalg.eig(m)
    sv = np.linalg.svd(vecs, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > 1e10:
        raise NonDiagonalizable("eigenvector matrix condition number above 1e10")
    radius = max(np.abs(lam).max(), eig_floor)
    worst = np.abs(lam.imag).max()
    if worst > 1e-8 * radius:
        raise ComplexBranch(f"eigenvalue imaginary part {worst} exceeds 1e-8 * {radius}")
    clamped = np.where(lam.real <= eig_floor, eig_floor, lam.real).astype(complex)
    log_m = (vecs * np.log(clamped)) @ np.linalg.inv(vecs)
    scale = max(np.abs(log_m).max(), 1e-300)
    if np.abs(log_m.imag).max() > 1e-8 * scale:
        raise ComplexBranch("matrix logarithm has a non-negligible imaginary part")
    return log_m.real


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scipy's scaling-and-squaring Pade)."""
    return scipy.linalg.expm(_as_matrix(m))


def interpolate(d0: ShapeDifference, d1: ShapeDifference, t: float,
                scheme: str = MULTIPLICATIVE,
                eig_floor: float = DEFAULT_EIG_FLOOR) -> ShapeDifference:
    """Interpolate two same-kind differences at parameter t in [0, 1].

    The multiplicative scheme blends on the matrix logarithm,
    exp((1-t) log d0 + t log d1); the linear scheme blends the matrices
    directly. Both reproduce the endpoints at t = 0 and t = 1 (the
    multiplicative one up to log/exp round-trip accuracy).
    """
    if d0.kind != d1.kind:
        raise ValueError(f"cannot interpolate kinds {d0.kind!r} and {d1.kind!r}")
    if d0.matrix.shape != d1.matrix.shape:
        raise DimensionMismatch(f"shape mismatch {d0.matrix.shape} vs {d1.matrix.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter {t} outside [0, 1]")
    if scheme == LINEAR:
        m = (1.0 - t) * d0.matrix + t * d1.matrix
    elif scheme == MULTIPLICATIVE:
        m = matrix_exp((1.0 - t) * matrix_log(d0, eig_floor) + t * matrix_log(d1, eig_floor))
    else:
        raise ValueError(f"unknown interpolation scheme {scheme!r}")
    return ShapeDifference(d0.kind, m, d0.base_id)


def functorial_difference(c0i: "FunctionalMap | np.ndarray", d0i: ShapeDifference,
                          d0j: ShapeDifference, pinv_fallback: bool = True,
                          rel_tol: float = 1e-12) -> ShapeDifference:
    """Transport: difference of shape j seen from shape i, without a direct map.

    Computes C D_0i^+ D_0j C^(-1). A non-square or singular C falls back
    to the pseudo-inverse with a warning, unless pinv_fallback is off.

    Raises
    ------
    SingularMap
        If C is not invertible within tolerance and the fallback is disabled.
    """
    c = c0i.matrix if hasattr(c0i, "matrix") else np.asarray(c0i, dtype=np.float64)
    if d0i.kind != d0j.kind:
        raise ValueError(f"cannot mix kinds {d0i.kind!r} and {d0j.kind!r}")
    if c.shape[1] != d0i.k or d0i.matrix.shape != d0j.matrix.shape:
        raise DimensionMismatch("map and difference dimensions are inconsistent")
    sv = np.linalg.svd(c, compute_uv=False)
    invertible = c.shape[0] == c.shape[1] and sv[-1] > rel_tol * sv[0]
    core = pseudo_inverse(d0i.matrix) @ d0j.matrix
    if invertible:
        m = c @ np.linalg.solve(c.T, core.T).T
    else:
        if not pinv_fallback:
            raise SingularMap("functional map not invertible within tolerance")
        warnings.warn("functional map not invertible, using pseudo-inverse", stacklevel=2)
        m = c @ core @ np.linalg.pinv(c, rcond=rel_tol)
    return ShapeDifference(d0i.kind, m, d0i.base_id)


def analogy_difference(d_a: ShapeDifference, d_b: ShapeDifference,
                       d_c: ShapeDifference) -> ShapeDifference:
    """Difference of the unknown shape X with X : C as B : A, i.e.
    D_C D_A^+ D_B."""
    if not (d_a.kind == d_b.kind == d_c.kind):
        raise ValueError("analogy terms must share a kind")
    if not (d_a.matrix.shape == d_b.matrix.shape == d_c.matrix.shape):
        raise DimensionMismatch("analogy terms must share dimensions")
    return ShapeDifference(
        d_a.kind, d_c.matrix @ pseudo_inverse(d_a.matrix) @ d_b.matrix, d_c.base_id
    )
