"""Rigid alignment and reconstruction metrics.

The Kabsch solver returns the rotation (determinant +1) and translation
minimizing the mean squared correspondence error; the reconstruction
loss and the d_R metric align the reconstruction to the ground truth
before measuring, so they are invariant to rigid motions of the
reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConnectivityMismatch, DimensionMismatch
from .meshio import TriMesh, edge_lengths, mesh_volume

_DEGENERATE_RTOL = 1e-12


@dataclass
class RigidTransform:
    """Rotation (det +1) plus translation. `degenerate` flags inputs whose
    optimal rotation is not unique (collinear or coincident points); a
    valid minimizer is still returned."""

    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool = False

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


def _check_points(source, target):
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.ndim != 2 or source.shape[1] != 3:
        raise DimensionMismatch(f"points must be (n, 3), got {source.shape}")
    if source.shape != target.shape:
        raise DimensionMismatch(f"point sets differ: {source.shape} vs {target.shape}")
    return source, target


def _fit(source: np.ndarray, target: np.ndarray, allow_reflection: bool):
    src_mean = source.mean(axis=0)
    tgt_mean = target.mean(axis=0)
    cov = (source - src_mean).T @ (target - tgt_mean)
    u, s, vt = np.linalg.svd(cov)
    v = vt.T
    degenerate = bool(s[1] <= _DEGENERATE_RTOL * max(s[0], 1e-300))
    if allow_reflection:
        rot = v @ u.T
    else:
        d = np.sign(np.linalg.det(v @ u.T)) or 1.0
        rot = (v * np.array([1.0, 1.0, d])) @ u.T
    return rot, tgt_mean - rot @ src_mean, degenerate


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Optimal rigid transform taking source points onto target points.

    Rows correspond (point i to point i). Reflections are excluded; for
    collinear configurations one of the minimizers is returned with the
    degenerate flag set instead of raising.
    """
    source, target = _check_points(source, target)
    if len(source) < 3:
        raise DimensionMismatch("need at least 3 points to fit a rigid transform")
    rot, trans, degenerate = _fit(source, target, allow_reflection=False)
    return RigidTransform(rot, trans, degenerate)


def recon_loss(gt: np.ndarray, recon: np.ndarray, allow_reflection: bool = False) -> float:
    """Mean squared vertex error after optimally aligning recon to gt.

    The reconstruction is aligned to the ground truth (not the other way
    round), matching the training loss convention. Set allow_reflection
    for orthogonal rather than rigid alignment.
    """
    gt, recon = _check_points(gt, recon)
    rot, trans, _ = _fit(recon, gt, allow_reflection)
    residual = recon @ rot.T + trans - gt
    return float(np.einsum("ij,ij->", residual, residual) / len(gt))


def aligned_rmse(gt: np.ndarray, recon: np.ndarray, allow_reflection: bool = False) -> float:
    """Root of recon_loss; average per-vertex distance after alignment."""
    return float(np.sqrt(recon_loss(gt, recon, allow_reflection)))


def metric_dR(gt_mesh: TriMesh, recon_points: np.ndarray) -> float:
    """Rigid-invariant reconstruction error (the training loss value)."""
    return recon_loss(gt_mesh.vertices, recon_points)


def _check_connectivity(gt_mesh: TriMesh, recon_mesh: TriMesh):
    if not np.array_equal(gt_mesh.faces, recon_mesh.faces):
        raise ConnectivityMismatch("meshes do not share a face list")


def metric_dV(gt_mesh: TriMesh, recon_mesh: TriMesh) -> float:
    """Relative volume error |V_gt - V_recon| / |V_gt|."""
    _check_connectivity(gt_mesh, recon_mesh)
    v_gt = mesh_volume(gt_mesh)
    return abs(v_gt - mesh_volume(recon_mesh)) / abs(v_gt)


def metric_dE(gt_mesh: TriMesh, recon_mesh: TriMesh) -> float:
    """Mean relative edge-length error over all undirected edges."""
    _check_connectivity(gt_mesh, recon_mesh)
    gt_lengths = edge_lengths(gt_mesh)
    recon_lengths = edge_lengths(recon_mesh)
    errs = [abs(gt_lengths[e] - recon_lengths[e]) / gt_lengths[e] for e in gt_lengths]
    return float(np.mean(errs))
