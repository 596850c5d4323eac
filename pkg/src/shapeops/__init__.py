"""Spectral shape-difference operators for triangle meshes.

Compact operator encodings of meshes relative to a base shape, an algebra
for interpolating and transporting them, exact embedding recovery from
the Gram operator, and a small trainable decoder that synthesizes
coordinates from operator channels.
"""

from .align import RigidTransform, aligned_rmse, kabsch, metric_dE, metric_dR, metric_dV, recon_loss
from .algebra import (
    LINEAR,
    MULTIPLICATIVE,
    analogy_difference,
    functorial_difference,
    interpolate,
    matrix_exp,
    matrix_log,
    pseudo_inverse,
)
from .decoder import (
    DecoderModel,
    SyntheticFamilyConfig,
    TrainingSample,
    forward,
    generate_family,
    gradient_check,
    nn_retrieve,
    reconstruct,
    train,
)
from .extrinsic import GramOperator, ExtrinsicInner, euclidean_inner, gram_operator, recover_from_gram
from .fmap import FunctionalMap, PointToPointMap, compose, fmap_from_matrix, fmap_from_p2p, identity_p2p
from .meshio import TriMesh, edge_lengths, load_mesh, mesh_volume, save_mesh, vertex_areas
from .shapediff import (
    ShapeDifference,
    area_difference,
    conformal_difference,
    extrinsic_difference,
    generic_difference,
)
from .spectral import SpectralBasis, cotan_stiffness, eigenbasis, project, unproject

__version__ = "0.1.0"
