import numpy as np
import pytest

from shapeops.decoder import DecoderModel, SyntheticFamilyConfig, generate_family, train
from shapeops.meshio import TriMesh
from shapeops.primitives import icosphere, torus
from shapeops.spectral import eigenbasis


def random_rotation(rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rigidly_moved(mesh: TriMesh, rng) -> TriMesh:
    rot = random_rotation(rng)
    trans = rng.uniform(-2.0, 2.0, 3)
    return TriMesh(mesh.vertices @ rot.T + trans, mesh.faces)


def bumpy_sphere(subdivisions: int = 2, seed: int = 7, amplitude: float = 0.15) -> TriMesh:
    """Deformed icosphere with simple spectrum and no exact symmetries, for
    tests that compare eigenvectors across meshes. The asymmetric radial
    bumps matter: a mirror-symmetric mesh has eigenfunctions with exactly
    tied extrema, making the deterministic sign convention unstable under
    floating-point jitter."""
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    scales = 1.0 + amplitude * rng.uniform(-1.0, 1.0, 3)
    x, y, z = base.vertices.T
    radial = (
        1.0
        + 0.5 * amplitude * np.sin(3.0 * x) * np.cos(2.0 * z)
        + 0.3 * amplitude * np.sin(2.0 * y + 0.7)
        + 0.2 * amplitude * np.cos(1.3 * x + 2.1 * y - 0.4)
    )
    return TriMesh(base.vertices * scales * radial[:, None], base.faces)


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture(scope="session")
def ico2_full_basis(ico2):
    return eigenbasis(ico2, ico2.n_vertices)


@pytest.fixture(scope="session")
def bumpy():
    return bumpy_sphere()


@pytest.fixture(scope="session")
def bumpy_basis20(bumpy):
    return eigenbasis(bumpy, 20)


@pytest.fixture(scope="session")
def torus1000():
    return torus(25, 40)


@pytest.fixture(scope="session")
def small_family():
    """120-sample family at reduced scale, shared by decoder tests."""
    cfg = SyntheticFamilyConfig(template_subdivisions=2, sample_count=120, seed=11, k0=20)
    return generate_family(cfg)


@pytest.fixture(scope="session")
def overfit_run(small_family):
    """Single-sample overfit: 3000 Adam steps at the fixed hyperparameters.
    Shared by the decoder tests and the acceptance suite."""
    sample = small_family[3][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=1)
    model, history = train(model, [sample], epochs=3000, lr=1e-3, batch_size=1)
    return model, history, sample
