import numpy as np
import pytest

from shapeops.algebra import MULTIPLICATIVE, analogy_difference, interpolate
from shapeops.decoder import (
    CHANNEL_ORDER,
    DecoderModel,
    SyntheticFamilyConfig,
    TrainingSample,
    dataset_loss,
    forward,
    generate_family,
    gradient_check,
    load_dataset,
    load_model,
    nn_retrieve,
    reconstruct,
    save_model,
    select_channels,
    train,
    write_dataset,
)
from shapeops.align import aligned_rmse, recon_loss
from shapeops.errors import EmptyDataset, NonFiniteLoss, ShapeMismatch
from shapeops.meshio import TriMesh
from shapeops.shapediff import ShapeDifference

from conftest import random_rotation


def off_kernel_identity(k):
    return np.diag([0.0] + [1.0] * (k - 1))


def make_samples(family):
    return [s for _, s in family]


def test_identity_config_channels():
    cfg = SyntheticFamilyConfig(template_subdivisions=2, axis_scale_range=(1.0, 1.0),
                                bend_range=(0.0, 0.0), sample_count=1, seed=0, k0=20)
    (_, sample), = generate_family(cfg)
    assert np.abs(sample.channels[0] - np.eye(20)).max() <= 1e-6
    assert np.abs(sample.channels[1] - off_kernel_identity(20)).max() <= 1e-6
    assert np.abs(sample.channels[2] - off_kernel_identity(20)).max() <= 1e-6


@pytest.mark.parametrize("s", [0.7, 1.4])
def test_uniform_scale_config_area_channel(s):
    cfg = SyntheticFamilyConfig(template_subdivisions=2, axis_scale_range=(s, s),
                                bend_range=(0.0, 0.0), sample_count=1, seed=0, k0=20)
    (_, sample), = generate_family(cfg)
    assert np.abs(sample.channels[0] - s * s * np.eye(20)).max() <= 1e-5


def test_generation_deterministic():
    cfg = SyntheticFamilyConfig(template_subdivisions=1, sample_count=3, seed=9, k0=10)
    fam1 = generate_family(cfg)
    fam2 = generate_family(cfg)
    for (m1, s1), (m2, s2) in zip(fam1, fam2):
        assert np.array_equal(m1.vertices, m2.vertices)
        assert np.array_equal(s1.channels, s2.channels)
        assert np.array_equal(s1.gt_coords, s2.gt_coords)


def test_zero_output_layer_gives_zero_coordinates(small_family):
    sample = small_family[0][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=3)
    model.weights["out_w"][:] = 0.0
    model.weights["out_b"][:] = 0.0
    out = forward(model, sample.channels)
    assert np.all(out == 0.0)
    assert out.shape == (162, 3)


def test_forward_deterministic(small_family):
    sample = small_family[1][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=4)
    out1 = forward(model, sample.channels)
    out2 = forward(model, sample.channels)
    assert np.array_equal(out1, out2)


def test_forward_shape_mismatch(small_family):
    model = DecoderModel(k0=20, n_vertices=162, seed=4)
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((2, 20, 20)))
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((3, 21, 21)))


def test_overfit_reaches_tiny_loss(overfit_run):
    model, history, sample = overfit_run
    mean_sq = float((sample.gt_coords ** 2).sum(axis=1).mean())
    assert history[-1] < 1e-6 * mean_sq


def test_trained_sample_loss_below_final_epoch(overfit_run):
    model, history, sample = overfit_run
    assert dataset_loss(model, [sample]) <= history[-1]


def test_overfit_loss_smoothed_monotone(overfit_run):
    _, history, _ = overfit_run
    window = 50
    smoothed = np.convolve(history, np.ones(window) / window, mode="valid")
    assert np.all(np.diff(smoothed) <= 1e-9)


def test_zero_learning_rate_keeps_weights(small_family):
    samples = make_samples(small_family)[:8]
    model = DecoderModel(k0=20, n_vertices=162, seed=5)
    before = {k: v.copy() for k, v in model.weights.items()}
    model, history = train(model, samples, epochs=5, lr=0.0, batch_size=4)
    for name, value in before.items():
        assert np.array_equal(model.weights[name], value)
    assert np.ptp(history) == 0.0


def test_training_deterministic(small_family):
    samples = make_samples(small_family)[:16]

    def run():
        model = DecoderModel(k0=20, n_vertices=162, seed=6)
        return train(model, samples, epochs=8, lr=1e-3, batch_size=4)[1]

    assert run() == run()


def test_held_out_trend_all_channels_beat_area(small_family):
    # reduced-scale version of the channel ablation: pose information in the
    # extrinsic channel must help on held-out shapes
    samples = make_samples(small_family)
    train_set, held = samples[:96], samples[96:]
    losses = {}
    for kinds in (("area",), CHANNEL_ORDER):
        model = DecoderModel(k0=20, n_vertices=162, channel_kinds=kinds, seed=0)
        model, _ = train(model, train_set, epochs=60, lr=1e-3,
                         channel_subset=kinds, batch_size=32)
        losses[kinds] = dataset_loss(model, held)
    assert losses[CHANNEL_ORDER] <= losses[("area",)]


def test_gradient_check_small_model(small_family):
    sample = small_family[2][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=7)
    deviation = gradient_check(model, sample, epsilon=1e-5, n_checks=40, seed=1)
    assert deviation < 1e-4


def test_gradient_check_stable_across_step_sizes(small_family):
    sample = small_family[2][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=8)
    devs = [gradient_check(model, sample, epsilon=eps, n_checks=25, seed=2)
            for eps in (1e-4, 1e-5, 1e-6)]
    assert max(devs) < 1e-4
    assert max(devs) <= 2.0 * max(min(devs), 1e-12)


def test_zero_channels_zero_conv_weight_gradient(small_family):
    from shapeops.decoder import _backward, _forward_full, _loss_and_grad

    sample = small_family[0][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=9)
    x = np.zeros((1, 3, 20, 20))
    y = sample.gt_coords[None]
    out, cache = _forward_full(model, x)
    _, g_out = _loss_and_grad(out, y)
    grads = _backward(model, cache, g_out)
    assert np.all(grads["conv_w"] == 0.0)


def test_nn_retrieve_exact_and_noisy(small_family):
    samples = make_samples(small_family)[:20]
    idx, best = nn_retrieve(samples[7].channels, samples)
    assert idx == 7
    noisy = samples[7].channels + 1e-9 / samples[7].channels.size
    idx2, _ = nn_retrieve(noisy, samples)
    assert idx2 == 7


def test_nn_retrieve_tie_breaks_low_index(small_family):
    sample = small_family[0][1]
    twin = TrainingSample(sample.channels.copy(), sample.gt_coords.copy())
    idx, _ = nn_retrieve(sample.channels, [twin, twin, twin])
    assert idx == 0


def test_nn_retrieve_empty():
    with pytest.raises(EmptyDataset):
        nn_retrieve(np.zeros((3, 4, 4)), [])


def test_reconstruct_from_difference_objects(small_family):
    sample = small_family[4][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=10)
    diffs = [ShapeDifference(kind, m) for kind, m in zip(CHANNEL_ORDER, sample.channels)]
    np.testing.assert_array_equal(reconstruct(model, diffs), forward(model, sample.channels))
    with pytest.raises(ShapeMismatch):
        reconstruct(model, diffs[:2])


def test_reconstruct_interpolation_endpoint(small_family):
    s0, s1 = small_family[0][1], small_family[5][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=11)
    d0 = [ShapeDifference(k, m) for k, m in zip(CHANNEL_ORDER, s0.channels)]
    d1 = [ShapeDifference(k, m) for k, m in zip(CHANNEL_ORDER, s1.channels)]
    blended = [interpolate(a, b, 0.0, MULTIPLICATIVE) for a, b in zip(d0, d1)]
    endpoint = reconstruct(model, d0)
    at_zero = reconstruct(model, blended)
    assert np.abs(at_zero - endpoint).max() <= 1e-6 * max(1.0, np.abs(endpoint).max())


def test_reconstruct_analogy_null_identity(small_family):
    s_a, s_c = small_family[1][1], small_family[6][1]
    model = DecoderModel(k0=20, n_vertices=162, seed=12)
    d_a = [ShapeDifference(k, m) for k, m in zip(CHANNEL_ORDER, s_a.channels)]
    d_c = [ShapeDifference(k, m) for k, m in zip(CHANNEL_ORDER, s_c.channels)]
    synthesized = [analogy_difference(a, a, c) for a, c in zip(d_a, d_c)]
    out_analogy = reconstruct(model, synthesized)
    out_direct = reconstruct(model, d_c)
    assert np.abs(out_analogy - out_direct).max() <= 1e-8 * max(1.0, np.abs(out_direct).max())


def test_pipeline_rigid_motion_invariance(small_family, overfit_run):
    # recompute channels from a rigidly moved held-out mesh; the decoder
    # output must not move (channels are invariant)
    from shapeops.fmap import fmap_from_p2p, identity_p2p
    from shapeops.extrinsic import euclidean_inner, projected_inner
    from shapeops.primitives import icosphere
    from shapeops.shapediff import (
        KIND_EXTRINSIC,
        area_difference,
        conformal_difference,
        generic_difference,
    )
    from shapeops.spectral import eigenbasis

    rng = np.random.default_rng(13)
    model, _, _ = overfit_run
    template = icosphere(2)
    base_basis = eigenbasis(template, 20)
    base_ext = projected_inner(base_basis, euclidean_inner(template))
    held_mesh = small_family[100][0]

    def channels_of(mesh):
        basis = eigenbasis(mesh, mesh.n_vertices)
        cmap = fmap_from_p2p(base_basis, basis, identity_p2p(mesh.n_vertices))
        d_a = area_difference(cmap).matrix
        d_c = conformal_difference(base_basis.eigenvalues, basis.eigenvalues, cmap).matrix
        d_e = generic_difference(base_ext, projected_inner(basis, euclidean_inner(mesh)),
                                 cmap, kind=KIND_EXTRINSIC).matrix
        return np.stack([d_a, d_c, d_e])

    rot = random_rotation(rng)
    moved = TriMesh(held_mesh.vertices @ rot.T + rng.uniform(-1, 1, 3), held_mesh.faces)
    out_ref = forward(model, channels_of(held_mesh))
    out_moved = forward(model, channels_of(moved))
    assert aligned_rmse(out_ref, out_moved) < 1e-6


def test_non_finite_loss_detected(small_family):
    samples = make_samples(small_family)[:4]
    model = DecoderModel(k0=20, n_vertices=162, seed=14)
    model.weights["out_b"][0] = np.inf
    with pytest.raises(NonFiniteLoss):
        train(model, samples, epochs=1, lr=0.0, batch_size=2)


def test_train_empty_dataset():
    model = DecoderModel(k0=20, n_vertices=162, seed=15)
    with pytest.raises(EmptyDataset):
        train(model, [], epochs=1)


def test_select_channels_subsets(small_family):
    sample = small_family[0][1]
    sub = select_channels(sample.channels, ("conformal", "extrinsic"))
    assert sub.shape == (2, 20, 20)
    assert np.array_equal(sub[0], sample.channels[1])


def test_model_file_round_trip(tmp_path, small_family, overfit_run):
    model, _, sample = overfit_run
    path = tmp_path / "model.opnet"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.channel_kinds == model.channel_kinds
    assert loaded.hyper == model.hyper
    np.testing.assert_array_equal(forward(loaded, sample.channels),
                                  forward(model, sample.channels))


def test_dataset_write_load_round_trip(tmp_path):
    cfg = SyntheticFamilyConfig(template_subdivisions=1, sample_count=3, seed=1, k0=10)
    family = generate_family(cfg)
    manifest = write_dataset(family, tmp_path / "data")
    samples, meshes = load_dataset(manifest)
    assert len(samples) == 3
    for (mesh, sample), loaded_sample, loaded_mesh in zip(family, samples, meshes):
        assert np.array_equal(sample.channels, loaded_sample.channels)
        assert np.array_equal(mesh.vertices, loaded_mesh.vertices)
