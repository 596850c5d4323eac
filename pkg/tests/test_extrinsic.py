import numpy as np
import pytest

from shapeops.errors import NegativeSpectrum
from shapeops.extrinsic import (
    GramOperator,
    euclidean_inner,
    gram_operator,
    projected_inner,
    recover_from_gram,
)
from shapeops.align import aligned_rmse
from shapeops.meshio import TriMesh, vertex_areas
from shapeops.primitives import equilateral_triangle, icosphere
from shapeops.spectral import eigenbasis

from conftest import rigidly_moved


def test_gram_symmetric_rank_three(bumpy, bumpy_basis20):
    g = gram_operator(bumpy, bumpy_basis20).matrix
    assert np.abs(g - g.T).max() <= 1e-10 * np.abs(g).max()
    sv = np.linalg.svd(g, compute_uv=False)
    assert sv[3] <= 1e-8 * sv[0]


def test_gram_not_translation_invariant(bumpy, bumpy_basis20):
    moved = TriMesh(bumpy.vertices + np.array([3.0, -1.0, 2.0]), bumpy.faces)
    g0 = gram_operator(bumpy, bumpy_basis20).matrix
    g1 = gram_operator(moved, eigenbasis(moved, 20)).matrix
    assert np.linalg.norm(g0 - g1) > 1e-3 * np.linalg.norm(g0)


def test_gram_matches_dense_product():
    mesh = icosphere(1)  # 42 vertices
    basis = eigenbasis(mesh, 10)
    g = gram_operator(mesh, basis).matrix
    a = np.diag(basis.mass)
    x = mesh.vertices
    dense = basis.eigenfunctions.T @ a @ x @ x.T @ a @ basis.eigenfunctions
    assert np.abs(g - dense).max() <= 1e-12 * max(1.0, np.abs(dense).max())


def test_euclidean_inner_equilateral_triangle():
    mesh = equilateral_triangle()
    a = vertex_areas(mesh)
    e = euclidean_inner(mesh).matrix
    # unit edge lengths: off-diagonals are -1 * a_i * a_j
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        assert e[i, j] == pytest.approx(-a[i] * a[j], rel=1e-12)
    np.testing.assert_allclose(np.diag(e), -(e.sum(axis=1) - np.diag(e)), atol=1e-18)


def test_euclidean_inner_zero_row_sums(bumpy):
    e = euclidean_inner(bumpy).matrix
    assert np.abs(e.sum(axis=1)).max() <= 1e-12 * np.abs(e).max()


def test_euclidean_inner_psd_with_one_null_direction(bumpy):
    e = euclidean_inner(bumpy).matrix
    vals = np.linalg.eigvalsh(e)
    scale = vals.max()
    assert vals[0] >= -1e-8 * scale
    assert vals[0] <= 1e-10 * scale  # the constant direction
    assert vals[1] > 1e-6 * scale  # exactly one near-zero eigenvalue


def test_euclidean_inner_rigid_invariance(bumpy):
    rng = np.random.default_rng(0)
    e0 = euclidean_inner(bumpy).matrix
    e1 = euclidean_inner(rigidly_moved(bumpy, rng)).matrix
    assert np.abs(e0 - e1).max() <= 1e-10 * np.abs(e0).max()


def test_full_basis_recovery_exact(ico2, ico2_full_basis):
    recovered = recover_from_gram(gram_operator(ico2, ico2_full_basis), ico2_full_basis)
    err = aligned_rmse(ico2.vertices, recovered, allow_reflection=True)
    assert err < 1e-6 * ico2.bounding_box_diagonal()


def test_recovery_error_monotone_in_k(ico2, ico2_full_basis):
    errors = []
    for k in (10, 30, 60, 100, ico2.n_vertices):
        basis = ico2_full_basis.truncated(k)
        rec = recover_from_gram(gram_operator(ico2, basis), basis)
        errors.append(aligned_rmse(ico2.vertices, rec, allow_reflection=True))
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-6 * errors[0]


def test_recovery_idempotent(ico2, ico2_full_basis):
    first = recover_from_gram(gram_operator(ico2, ico2_full_basis), ico2_full_basis)
    remeshed = TriMesh(first, ico2.faces)
    basis2 = eigenbasis(remeshed, remeshed.n_vertices)
    second = recover_from_gram(gram_operator(remeshed, basis2), basis2)
    assert aligned_rmse(first, second, allow_reflection=True) < 1e-8


def test_recovery_rigid_invariant(bumpy):
    rng = np.random.default_rng(1)
    basis = eigenbasis(bumpy, 40)
    rec0 = recover_from_gram(gram_operator(bumpy, basis), basis)
    moved = rigidly_moved(bumpy, rng)
    moved_basis = eigenbasis(moved, 40)
    rec1 = recover_from_gram(gram_operator(moved, moved_basis), moved_basis)
    assert aligned_rmse(rec0, rec1, allow_reflection=True) < 1e-8


def test_negative_spectrum_raises(bumpy_basis20):
    bad = GramOperator(-np.eye(20))
    with pytest.raises(NegativeSpectrum):
        recover_from_gram(bad, bumpy_basis20)


def test_projected_inner_matches_direct(bumpy, bumpy_basis20):
    inner = euclidean_inner(bumpy)
    m = projected_inner(bumpy_basis20, inner)
    direct = bumpy_basis20.eigenfunctions.T @ inner.matrix @ bumpy_basis20.eigenfunctions
    assert np.abs(m - direct).max() <= 1e-10 * np.abs(direct).max()
