"""Trainable decoder from difference-operator channels to coordinates.

A shallow convolutional encoder (one layer, 8 filters) reads the stacked
difference matrices as image channels; three dense layers decode the
latent vector into the coordinate functions of a fixed template. The
network is plain numpy with hand-written backprop and Adam so that runs
are bit-reproducible. The synthetic shape family (anisotropically scaled
and bent spheres) stands in for large scan corpora at desk scale.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, NonFiniteLoss, ParseError, ShapeMismatch
from .extrinsic import euclidean_inner, projected_inner
from .fmap import fmap_from_p2p, identity_p2p
from .meshio import TriMesh, load_mesh, save_mesh
from .primitives import icosphere
from .shapediff import (
    ShapeDifference,
    area_difference,
    conformal_difference,
    generic_difference,
    load_sdiff,
    save_sdiff,
    KIND_EXTRINSIC,
)
from .spectral import eigenbasis

CHANNEL_ORDER = ("area", "conformal", "extrinsic")

STD_FLOOR = 1e-8

_PARAM_ORDER = (
    "conv_w", "conv_b",
    "dense1_w", "dense1_b",
    "dense2_w", "dense2_b",
    "dense3_w", "dense3_b",
    "out_w", "out_b",
)


@dataclass
class TrainingSample:
    """Stacked difference channels (area, conformal, extrinsic order) plus
    the ground-truth embedding they were computed from."""

    channels: np.ndarray  # (3, k0, k0)
    gt_coords: np.ndarray  # (n, 3)
    base_id: str = ""


@dataclass
class SyntheticFamilyConfig:
    """Parameters of the synthetic shape family.

    Samples are icosphere templates scaled per axis (style variation) and
    bent around the x axis by an angle proportional to height (pose
    variation). Every sample is seeded individually by its index.
    """

    template_subdivisions: int = 3
    axis_scale_range: tuple[float, float] = (0.6, 1.6)
    bend_range: tuple[float, float] = (-np.pi / 3.0, np.pi / 3.0)
    sample_count: int = 1
    seed: int = 0
    k0: int = 60

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.axis_scale_range[1] < self.axis_scale_range[0]:
            raise ValueError("empty axis scale range")
        if self.bend_range[1] < self.bend_range[0]:
            raise ValueError("empty bend range")


class DecoderModel:
    """Weights and input statistics of the channel decoder network."""

    def __init__(self, k0: int, n_vertices: int,
                 channel_kinds: tuple[str, ...] = CHANNEL_ORDER, seed: int = 0,
                 conv_filters: int = 8, conv_kernel: int = 5, conv_stride: int = 2,
                 latent: int = 128, decoder_dims: tuple[int, int] = (256, 512)):
        if not channel_kinds or any(k not in CHANNEL_ORDER for k in channel_kinds):
            raise ValueError(f"channel kinds must be non-empty subset of {CHANNEL_ORDER}")
        if k0 < conv_kernel:
            raise ValueError(f"k0={k0} smaller than the convolution kernel")
        self.k0 = k0
        self.n_vertices = n_vertices
        self.channel_kinds = tuple(channel_kinds)
        self.conv_filters = conv_filters
        self.conv_kernel = conv_kernel
        self.conv_stride = conv_stride
        self.latent = latent
        self.decoder_dims = tuple(decoder_dims)
        self.rng_seed = seed
        self.hyper = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "batch": 32}
        c = len(self.channel_kinds)
        self.channel_mean = np.zeros((c, k0, k0))
        self.channel_std = np.ones((c, k0, k0))
        side = (k0 - conv_kernel) // conv_stride + 1
        self._conv_out = conv_filters * side * side
        rng = np.random.default_rng(seed)
        d1, d2 = self.decoder_dims
        self.weights = {
            "conv_w": self._he(rng, (conv_filters, c, conv_kernel, conv_kernel),
                               c * conv_kernel * conv_kernel),
            "conv_b": np.zeros(conv_filters),
            "dense1_w": self._he(rng, (self._conv_out, latent), self._conv_out),
            "dense1_b": np.zeros(latent),
            "dense2_w": self._he(rng, (latent, d1), latent),
            "dense2_b": np.zeros(d1),
            "dense3_w": self._he(rng, (d1, d2), d1),
            "dense3_b": np.zeros(d2),
            "out_w": rng.standard_normal((d2, 3 * n_vertices)) / np.sqrt(d2),
            "out_b": np.zeros(3 * n_vertices),
        }

    @staticmethod
    def _he(rng, shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def select_channels(channels: np.ndarray, kinds: tuple[str, ...]) -> np.ndarray:
    """Pick a subset of the canonical (area, conformal, extrinsic) stack."""
    idx = [CHANNEL_ORDER.index(k) for k in kinds]
    return channels[idx]


def _im2col(x: np.ndarray, ksize: int, stride: int) -> np.ndarray:
    b, c, h, w = x.shape
    oh = (h - ksize) // stride + 1
    ow = (w - ksize) // stride + 1
    cols = np.empty((b, c * ksize * ksize, oh * ow))
    row = 0
    for ci in range(c):
        for di in range(ksize):
            for dj in range(ksize):
                patch = x[:, ci, di : di + stride * oh : stride, dj : dj + stride * ow : stride]
                cols[:, row] = patch.reshape(b, -1)
                row += 1
    return cols


def _forward_full(model: DecoderModel, x: np.ndarray):
    """Forward pass on a standardized-on-the-fly batch; returns output and
    the cache needed for backprop."""
    w = model.weights
    z = (x - model.channel_mean) / model.channel_std
    cols = _im2col(z, model.conv_kernel, model.conv_stride)
    wc = w["conv_w"].reshape(model.conv_filters, -1)
    conv_pre = np.matmul(wc, cols) + w["conv_b"][:, None]  # (B, f, P)
    conv = np.maximum(conv_pre, 0.0)
    flat = conv.reshape(len(x), -1)
    h1 = np.maximum(flat @ w["dense1_w"] + w["dense1_b"], 0.0)
    h2 = np.maximum(h1 @ w["dense2_w"] + w["dense2_b"], 0.0)
    h3 = np.maximum(h2 @ w["dense3_w"] + w["dense3_b"], 0.0)
    out = (h3 @ w["out_w"] + w["out_b"]).reshape(len(x), model.n_vertices, 3)
    cache = (cols, conv, flat, h1, h2, h3)
    return out, cache


def _backward(model: DecoderModel, cache, g_out: np.ndarray) -> dict:
    cols, conv, flat, h1, h2, h3 = cache
    w = model.weights
    g4 = g_out.reshape(len(g_out), -1)
    grads = {}
    grads["out_w"] = h3.T @ g4
    grads["out_b"] = g4.sum(axis=0)
    g3 = (g4 @ w["out_w"].T) * (h3 > 0.0)
    grads["dense3_w"] = h2.T @ g3
    grads["dense3_b"] = g3.sum(axis=0)
    g2 = (g3 @ w["dense3_w"].T) * (h2 > 0.0)
    grads["dense2_w"] = h1.T @ g2
    grads["dense2_b"] = g2.sum(axis=0)
    g1 = (g2 @ w["dense2_w"].T) * (h1 > 0.0)
    grads["dense1_w"] = flat.T @ g1
    grads["dense1_b"] = g1.sum(axis=0)
    g_flat = g1 @ w["dense1_w"].T
    g_conv = g_flat.reshape(conv.shape) * (conv > 0.0)
    grads["conv_w"] = np.einsum("bfp,bkp->fk", g_conv, cols).reshape(w["conv_w"].shape)
    grads["conv_b"] = g_conv.sum(axis=(0, 2))
    return grads


def _batched_alignment(recon: np.ndarray, gt: np.ndarray):
    """Optimal per-sample rotation (det +1) and translation of recon onto gt."""
    src_mean = recon.mean(axis=1)
    tgt_mean = gt.mean(axis=1)
    cov = np.einsum("bni,bnj->bij", recon - src_mean[:, None], gt - tgt_mean[:, None])
    u, _, vt = np.linalg.svd(cov)
    v = vt.transpose(0, 2, 1)
    det = np.linalg.det(v @ u.transpose(0, 2, 1))
    sign = np.where(det < 0.0, -1.0, 1.0)
    v_fixed = v.copy()
    v_fixed[:, :, 2] *= sign[:, None]
    rot = v_fixed @ u.transpose(0, 2, 1)
    trans = tgt_mean - np.einsum("bij,bj->bi", rot, src_mean)
    return rot, trans


def _loss_and_grad(recon: np.ndarray, gt: np.ndarray):
    """Mean (over batch) of per-sample aligned MSE, and its gradient with
    the alignment treated as constant."""
    b, n, _ = recon.shape
    rot, trans = _batched_alignment(recon, gt)
    residual = recon @ rot.transpose(0, 2, 1) + trans[:, None, :] - gt
    loss = float(np.einsum("bni,bni->", residual, residual) / (b * n))
    grad = (2.0 / (b * n)) * (residual @ rot)
    return loss, grad


def _batch_loss(model: DecoderModel, x: np.ndarray, y: np.ndarray) -> float:
    out, _ = _forward_full(model, x)
    loss, _ = _loss_and_grad(out, y)
    return loss


def forward(model: DecoderModel, channels: np.ndarray) -> np.ndarray:
    """Deterministic forward pass. Accepts one channel stack (c, k0, k0)
    or a batch (b, c, k0, k0); standardization uses the stored statistics."""
    channels = np.asarray(channels, dtype=np.float64)
    single = channels.ndim == 3
    if single:
        channels = channels[None]
    expected = (len(model.channel_kinds), model.k0, model.k0)
    if channels.shape[1:] != expected:
        raise ShapeMismatch(f"channels have shape {channels.shape[1:]}, model wants {expected}")
    out, _ = _forward_full(model, channels)
    return out[0] if single else out


def train(model: DecoderModel, dataset: list[TrainingSample], epochs: int,
          lr: float = 1e-3, channel_subset: tuple[str, ...] | None = None,
          batch_size: int = 32):
    """Adam training on the aligned-MSE loss; returns (model, loss history).

    The per-step optimal alignment is recomputed but treated as constant
    in the backward pass. Channel statistics are (re)estimated from the
    dataset at the start. Deterministic given the model seed, the dataset,
    and the hyperparameters.
    """
    if not dataset:
        raise EmptyDataset("training needs at least one sample")
    kinds = tuple(channel_subset) if channel_subset is not None else model.channel_kinds
    if kinds != model.channel_kinds:
        raise ShapeMismatch(f"model was built for channels {model.channel_kinds}, got {kinds}")
    x = np.stack([select_channels(s.channels, kinds) for s in dataset])
    y = np.stack([s.gt_coords for s in dataset])
    if y.shape[1] != model.n_vertices:
        raise ShapeMismatch(f"samples have {y.shape[1]} vertices, model wants {model.n_vertices}")
    model.channel_mean = x.mean(axis=0)
    model.channel_std = np.maximum(x.std(axis=0), STD_FLOOR)
    model.hyper.update(lr=lr, batch=batch_size)
    beta1, beta2, eps = model.hyper["beta1"], model.hyper["beta2"], model.hyper["eps"]
    adam_m = {name: np.zeros_like(model.weights[name]) for name in _PARAM_ORDER}
    adam_v = {name: np.zeros_like(model.weights[name]) for name in _PARAM_ORDER}
    rng = np.random.default_rng(model.rng_seed)
    n_samples = len(dataset)
    history = []
    step = 0
    for _ in range(int(epochs)):
        perm = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, batch_size):
            idx = perm[start : start + batch_size]
            out, cache = _forward_full(model, x[idx])
            loss, g_out = _loss_and_grad(out, y[idx])
            total += loss * len(idx)
            if lr != 0.0:
                grads = _backward(model, cache, g_out)
                step += 1
                correction1 = 1.0 - beta1 ** step
                correction2 = 1.0 - beta2 ** step
                for name in _PARAM_ORDER:
                    g = grads[name]
                    adam_m[name] = beta1 * adam_m[name] + (1.0 - beta1) * g
                    adam_v[name] = beta2 * adam_v[name] + (1.0 - beta2) * g * g
                    m_hat = adam_m[name] / correction1
                    v_hat = adam_v[name] / correction2
                    model.weights[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
        epoch_loss = total / n_samples
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"loss {epoch_loss} after {len(history)} epochs")
        for name in _PARAM_ORDER:
            if not np.isfinite(model.weights[name]).all():
                raise NonFiniteLoss(f"non-finite weights in {name}")
        history.append(float(epoch_loss))
    return model, history


def gradient_check(model: DecoderModel, sample: TrainingSample,
                   epsilon: float = 1e-5, n_checks: int = 32, seed: int = 0) -> float:
    """Compare analytic weight gradients against central finite differences
    of the loss (alignment recomputed per evaluation) on a random subset
    of weights; returns the max relative deviation."""
    x = select_channels(sample.channels, model.channel_kinds)[None]
    y = sample.gt_coords[None]
    out, cache = _forward_full(model, x)
    _, g_out = _loss_and_grad(out, y)
    grads = _backward(model, cache, g_out)
    sizes = [model.weights[name].size for name in _PARAM_ORDER]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for p in picks:
        slot = int(np.searchsorted(bounds, p, side="right"))
        offset = int(p - (bounds[slot - 1] if slot else 0))
        name = _PARAM_ORDER[slot]
        flat = model.weights[name].reshape(-1)
        orig = flat[offset]
        flat[offset] = orig + epsilon
        loss_plus = _batch_loss(model, x, y)
        flat[offset] = orig - epsilon
        loss_minus = _batch_loss(model, x, y)
        flat[offset] = orig
        fd = (loss_plus - loss_minus) / (2.0 * epsilon)
        an = grads[name].reshape(-1)[offset]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


def nn_retrieve(query_channels, dataset: list[TrainingSample],
                kinds: tuple[str, ...] = CHANNEL_ORDER):
    """Training sample nearest to the query in summed Frobenius distance
    over the given channels; ties resolve to the lowest index."""
    if not dataset:
        raise EmptyDataset("retrieval needs a non-empty dataset")
    if isinstance(query_channels, (list, tuple)) and query_channels and isinstance(
        query_channels[0], ShapeDifference
    ):
        query = np.stack([d.matrix for d in query_channels])
    else:
        query = np.asarray(query_channels, dtype=np.float64)
    dists = np.empty(len(dataset))
    for i, s in enumerate(dataset):
        chans = select_channels(s.channels, kinds)
        if chans.shape != query.shape:
            raise ShapeMismatch(f"query shape {query.shape} != sample shape {chans.shape}")
        dists[i] = np.sqrt(((chans - query) ** 2).sum(axis=(1, 2))).sum()
    best = int(np.argmin(dists))
    return best, dataset[best]


def reconstruct(model: DecoderModel, d_channels) -> np.ndarray:
    """Synthesize coordinates from difference channels (a list of
    ShapeDifference in the model's channel order, or a raw stack)."""
    if isinstance(d_channels, (list, tuple)):
        kinds = tuple(d.kind for d in d_channels)
        if kinds != model.channel_kinds:
            raise ShapeMismatch(f"model wants channels {model.channel_kinds}, got {kinds}")
        stack = np.stack([d.matrix for d in d_channels])
    else:
        stack = np.asarray(d_channels, dtype=np.float64)
    return forward(model, stack)


def dataset_loss(model: DecoderModel, samples: list[TrainingSample]) -> float:
    """Mean aligned reconstruction loss of the model over samples."""
    if not samples:
        raise EmptyDataset("evaluation needs at least one sample")
    x = np.stack([select_channels(s.channels, model.channel_kinds) for s in samples])
    y = np.stack([s.gt_coords for s in samples])
    return _batch_loss(model, x, y)


def _deform(vertices: np.ndarray, scales: np.ndarray, bend: float) -> np.ndarray:
    scaled = vertices * scales
    alpha = bend * vertices[:, 1]  # proportional to undeformed height
    cos_a, sin_a = np.cos(alpha), np.sin(alpha)
    out = scaled.copy()
    out[:, 1] = cos_a * scaled[:, 1] - sin_a * scaled[:, 2]
    out[:, 2] = sin_a * scaled[:, 1] + cos_a * scaled[:, 2]
    return out


def generate_family(cfg: SyntheticFamilyConfig):
    """Deterministic synthetic family of deformed template spheres.

    Every sample shares the template connectivity, so identity
    correspondences induce the functional maps. The base uses a k0
    truncated basis, targets their full basis. Returns a list of
    (TriMesh, TrainingSample) pairs.
    """
    template = icosphere(cfg.template_subdivisions)
    n = template.n_vertices
    base_id = f"ico{cfg.template_subdivisions}"
    base_basis = eigenbasis(template, cfg.k0)
    base_ext = projected_inner(base_basis, euclidean_inner(template))
    out = []
    for i in range(cfg.sample_count):
        rng = np.random.default_rng([cfg.seed, i])
        scales = rng.uniform(*cfg.axis_scale_range, size=3)
        bend = rng.uniform(*cfg.bend_range)
        mesh = TriMesh(_deform(template.vertices, scales, bend), template.faces)
        basis = eigenbasis(mesh, n)  # full basis on the target
        cmap = fmap_from_p2p(base_basis, basis, identity_p2p(n))
        d_area = area_difference(cmap, base_id)
        d_conf = conformal_difference(
            base_basis.eigenvalues, basis.eigenvalues, cmap, base_id=base_id
        )
        target_ext = projected_inner(basis, euclidean_inner(mesh))
        d_ext = generic_difference(base_ext, target_ext, cmap, kind=KIND_EXTRINSIC,
                                   base_id=base_id)
        channels = np.stack([d_area.matrix, d_conf.matrix, d_ext.matrix])
        out.append((mesh, TrainingSample(channels, mesh.vertices.copy(), base_id)))
    return out


def write_dataset(family, out_dir) -> str:
    """Write meshes and difference channels plus a manifest.

    The manifest has one line per sample: the mesh file and the three
    SDIFF files (area, conformal, extrinsic), comma separated, relative
    to the manifest location.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for i, (mesh, sample) in enumerate(family):
        stem = f"sample_{i:04d}"
        save_mesh(mesh, os.path.join(out_dir, stem + ".obj"))
        names = [stem + ".obj"]
        for kind, matrix in zip(CHANNEL_ORDER, sample.channels):
            fname = f"{stem}_{kind}.sdiff"
            save_sdiff(ShapeDifference(kind, matrix, sample.base_id),
                       os.path.join(out_dir, fname))
            names.append(fname)
        lines.append(",".join(names))
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def load_dataset(manifest_path):
    """Read a dataset manifest; returns (samples, meshes)."""
    manifest_path = os.fspath(manifest_path)
    root = os.path.dirname(manifest_path)
    samples, meshes = [], []
    with open(manifest_path, "r") as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    for row in rows:
        parts = row.split(",")
        if len(parts) != 4:
            raise ParseError(f"manifest line needs mesh + 3 sdiff files: {row!r}")
        mesh = load_mesh(os.path.join(root, parts[0]))
        diffs = [load_sdiff(os.path.join(root, p)) for p in parts[1:]]
        kinds = tuple(d.kind for d in diffs)
        if kinds != CHANNEL_ORDER:
            raise ParseError(f"manifest channels {kinds} not in canonical order")
        channels = np.stack([d.matrix for d in diffs])
        samples.append(TrainingSample(channels, mesh.vertices.copy(), diffs[0].base_id))
        meshes.append(mesh)
    return samples, meshes


def save_model(model: DecoderModel, path) -> None:
    """Versioned text dump: header, architecture, channel statistics, weights."""
    lines = [
        "OPNET-MODEL v1",
        f"k0 {model.k0}",
        f"n_vertices {model.n_vertices}",
        "channels " + ",".join(model.channel_kinds),
        f"conv {model.conv_filters} {model.conv_kernel} {model.conv_stride}",
        f"latent {model.latent}",
        "decoder " + " ".join(str(d) for d in model.decoder_dims),
        "adam " + " ".join(f"{k}={model.hyper[k]!r}" for k in ("lr", "beta1", "beta2", "eps", "batch")),
        f"seed {model.rng_seed}",
    ]
    arrays = [("channel_mean", model.channel_mean), ("channel_std", model.channel_std)]
    arrays += [(name, model.weights[name]) for name in _PARAM_ORDER]
    for name, arr in arrays:
        lines.append(f"array {name} " + " ".join(str(d) for d in arr.shape))
        lines.append(" ".join("%.17g" % x for x in arr.reshape(-1)))
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> DecoderModel:
    with open(os.fspath(path), "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "OPNET-MODEL v1":
        raise ParseError("missing OPNET-MODEL v1 header")
    fields = {}
    idx = 1
    while idx < len(lines) and not lines[idx].startswith("array "):
        key, _, value = lines[idx].partition(" ")
        fields[key] = value
        idx += 1
    try:
        conv_filters, conv_kernel, conv_stride = (int(t) for t in fields["conv"].split())
        model = DecoderModel(
            k0=int(fields["k0"]),
            n_vertices=int(fields["n_vertices"]),
            channel_kinds=tuple(fields["channels"].split(",")),
            seed=int(fields["seed"]),
            conv_filters=conv_filters,
            conv_kernel=conv_kernel,
            conv_stride=conv_stride,
            latent=int(fields["latent"]),
            decoder_dims=tuple(int(t) for t in fields["decoder"].split()),
        )
        for item in fields["adam"].split():
            key, _, value = item.partition("=")
            model.hyper[key] = int(value) if key == "batch" else float(value)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed model header: {exc}") from exc
    while idx < len(lines):
        if not lines[idx].startswith("array "):
            idx += 1
            continue
        tokens = lines[idx].split()
        name, shape = tokens[1], tuple(int(t) for t in tokens[2:])
        values = np.array(lines[idx + 1].split(), dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ParseError(f"array {name} payload does not match shape {shape}")
        arr = values.reshape(shape)
        if name == "channel_mean":
            model.channel_mean = arr
        elif name == "channel_std":
            model.channel_std = arr
        elif name in model.weights:
            if model.weights[name].shape != arr.shape:
                raise ParseError(f"array {name} shape {arr.shape} inconsistent with header")
            model.weights[name] = arr
        else:
            raise ParseError(f"unknown array {name!r}")
        idx += 2
    return model
