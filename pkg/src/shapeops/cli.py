"""Command-line pipeline: bases, differences, recovery, synthesis, training.

Every command writes deterministic text artifacts (OBJ meshes, CSV
reports, format-headed matrix files) and prints a single summary line
"OK <command> <primary-metric>" on success. Failures exit non-zero with
a one-line diagnostic naming the error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import algebra, decoder, shapediff
from .align import metric_dE, metric_dR, metric_dV
from .errors import ShapeOpsError
from .extrinsic import gram_operator, recover_from_gram
from .fmap import fmap_from_p2p, load_fmap, load_p2p
from .meshio import TriMesh, load_mesh, save_mesh
from .spectral import eigenbasis, save_spectral

TARGET_BASIS_FULL_LIMIT = 3000
TARGET_BASIS_CAP = 300


@dataclass
class PipelineConfig:
    """Shared defaults for the pipeline commands."""

    k0: int = 60
    pinv_tol: float = shapediff.DEFAULT_PINV_RTOL
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")

    @staticmethod
    def target_basis_size(n_vertices: int, k0: int) -> int:
        """Full basis for small targets, a fixed cap for large ones."""
        if n_vertices <= TARGET_BASIS_FULL_LIMIT:
            return n_vertices
        return max(TARGET_BASIS_CAP, k0)


def _parse_kinds(spec: str) -> tuple[str, ...]:
    letter_map = {"a": "area", "c": "conformal", "e": "extrinsic"}
    kinds = []
    for token in spec.split(","):
        token = token.strip().lower()
        kind = letter_map.get(token, token)
        if kind not in shapediff.KINDS:
            raise ValueError(f"unknown difference kind {token!r}")
        if kind not in kinds:
            kinds.append(kind)
    return tuple(sorted(kinds, key=shapediff.KINDS.index))


def _load_diff_set(spec: str) -> list[shapediff.ShapeDifference]:
    return [shapediff.load_sdiff(p) for p in spec.split(",")]


def cmd_basis(args) -> str:
    mesh = load_mesh(args.mesh)
    basis = eigenbasis(mesh, args.k0)
    save_spectral(basis, args.out)
    return "%.17g" % basis.eigenvalues[-1]


def cmd_diff(args) -> str:
    base = load_mesh(args.base)
    target = load_mesh(args.target)
    base_basis = eigenbasis(base, args.k0)
    kinds = _parse_kinds(args.kinds)
    base_id = os.path.splitext(os.path.basename(args.base))[0]
    if args.fmap:
        cmap = load_fmap(args.fmap)
        k_target = cmap.target_dim
        target_basis = eigenbasis(target, k_target)
    else:
        k_target = PipelineConfig.target_basis_size(target.n_vertices, args.k0)
        target_basis = eigenbasis(target, k_target)
        p2p = load_p2p(args.map) if args.map else None
        if p2p is None:
            if target.n_vertices != base.n_vertices:
                raise ShapeOpsError(
                    "meshes differ in size: pass --map or --fmap explicitly"
                )
            from .fmap import identity_p2p

            p2p = identity_p2p(target.n_vertices)
        cmap = fmap_from_p2p(base_basis, target_basis, p2p)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.target))[0]
    last = None
    for kind in kinds:
        if kind == shapediff.KIND_AREA:
            diff = shapediff.area_difference(cmap, base_id)
        elif kind == shapediff.KIND_CONFORMAL:
            diff = shapediff.conformal_difference(
                base_basis.eigenvalues, target_basis.eigenvalues, cmap,
                args.pinv_tol, base_id
            )
        else:
            diff = shapediff.extrinsic_difference(
                base, base_basis, target, target_basis, cmap, args.pinv_tol, base_id
            )
        shapediff.save_sdiff(diff, os.path.join(args.out, f"{stem}_{kind}.sdiff"))
        last = diff
    return "%.17g" % float(np.linalg.norm(last.matrix))


def cmd_recover(args) -> str:
    mesh = load_mesh(args.mesh)
    k = args.k0 if args.k0 else mesh.n_vertices
    basis = eigenbasis(mesh, k)
    coords = recover_from_gram(gram_operator(mesh, basis), basis)
    save_mesh(TriMesh(coords, mesh.faces), args.out)
    from .align import aligned_rmse

    return "%.17g" % aligned_rmse(mesh.vertices, coords, allow_reflection=True)


def cmd_interp(args) -> str:
    d0 = _load_diff_set(args.d0)
    d1 = _load_diff_set(args.d1)
    model = decoder.load_model(args.model)
    scheme = {"mul": algebra.MULTIPLICATIVE, "lin": algebra.LINEAR}[args.scheme]
    if args.steps < 2:
        raise ValueError("interpolation needs at least 2 steps")
    os.makedirs(args.out, exist_ok=True)
    template_faces = _template_faces(model)
    coords = []
    for s in range(args.steps):
        t = s / (args.steps - 1)
        blended = [algebra.interpolate(a, b, t, scheme) for a, b in zip(d0, d1)]
        points = decoder.reconstruct(model, blended)
        coords.append(points)
        save_mesh(TriMesh(points, template_faces), os.path.join(args.out, f"interp_{s:03d}.obj"))
    dists = [
        float(np.linalg.norm(coords[s + 1] - coords[s], axis=1).mean())
        for s in range(len(coords) - 1)
    ]
    report = os.path.join(args.out, "consecutive_distances.csv")
    with open(report, "w") as fh:
        fh.write("step,distance\n")
        for s, d in enumerate(dists):
            fh.write("%d,%.17g\n" % (s, d))
    return "%.17g" % float(np.mean(dists))


def cmd_analogy(args) -> str:
    d_a = _load_diff_set(args.da)
    d_b = _load_diff_set(args.db)
    d_c = _load_diff_set(args.dc)
    model = decoder.load_model(args.model)
    blended = [algebra.analogy_difference(a, b, c) for a, b, c in zip(d_a, d_b, d_c)]
    points = decoder.reconstruct(model, blended)
    save_mesh(TriMesh(points, _template_faces(model)), args.out)
    return "%.17g" % float(np.linalg.norm(points))


def cmd_train(args) -> str:
    samples, _ = decoder.load_dataset(args.manifest)
    kinds = _parse_kinds(args.kinds)
    if not samples:
        raise ShapeOpsError("empty dataset")
    k0 = samples[0].channels.shape[1]
    n_vertices = samples[0].gt_coords.shape[0]
    model = decoder.DecoderModel(k0, n_vertices, kinds, seed=args.seed)
    model, history = decoder.train(
        model, samples, epochs=args.epochs, lr=args.lr,
        channel_subset=kinds, batch_size=args.batch
    )
    decoder.save_model(model, args.out)
    loss_csv = os.path.splitext(args.out)[0] + "_loss.csv"
    with open(loss_csv, "w") as fh:
        fh.write("epoch,loss\n")
        for e, loss in enumerate(history):
            fh.write("%d,%.17g\n" % (e, loss))
    return "%.17g" % history[-1]


def cmd_eval(args) -> str:
    gt = load_mesh(args.gt)
    recon = load_mesh(args.recon)
    d_r = metric_dR(gt, recon.vertices)
    d_v = metric_dV(gt, recon)
    d_e = metric_dE(gt, recon)
    with open(args.out, "w") as fh:
        fh.write("d_R,d_V,d_E\n")
        fh.write("%.17g,%.17g,%.17g\n" % (d_r, d_v, d_e))
    return "%.17g" % d_r


def cmd_generate(args) -> str:
    lo, hi = (float(t) for t in args.scale_range.split(","))
    blo, bhi = (float(t) for t in args.bend_range.split(","))
    cfg = decoder.SyntheticFamilyConfig(
        template_subdivisions=args.subdivisions,
        axis_scale_range=(lo, hi),
        bend_range=(blo, bhi),
        sample_count=args.samples,
        seed=args.seed,
        k0=args.k0,
    )
    family = decoder.generate_family(cfg)
    decoder.write_dataset(family, args.out)
    return str(len(family))


def _template_faces(model: decoder.DecoderModel) -> np.ndarray:
    """Connectivity for decoder outputs: the icosphere level whose vertex
    count matches the model."""
    from .primitives import icosphere

    for level in range(7):
        if 10 * 4 ** level + 2 == model.n_vertices:
            return icosphere(level).faces
    raise ShapeOpsError(
        f"no icosphere level has {model.n_vertices} vertices; cannot infer faces"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapeops",
        description="Spectral shape-difference operators: compute, combine, recover, train.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="write the spectral basis of a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--k0", type=int, default=60)
    p.add_argument("--out", required=True)

    p = sub.add_parser("diff", help="write shape-difference operators")
    p.add_argument("--base", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--map", help="point-to-point correspondence file")
    p.add_argument("--fmap", help="precomputed functional map file")
    p.add_argument("--k0", type=int, default=60)
    p.add_argument("--kinds", default="a,c,e")
    p.add_argument("--pinv-tol", type=float, default=shapediff.DEFAULT_PINV_RTOL)
    p.add_argument("--out", required=True)

    p = sub.add_parser("recover", help="recover coordinates from the Gram operator")
    p.add_argument("--mesh", required=True)
    p.add_argument("--k0", type=int, default=0, help="basis size; 0 = full")
    p.add_argument("--out", required=True)

    p = sub.add_parser("interp", help="interpolate difference sets and synthesize meshes")
    p.add_argument("--d0", required=True, help="comma-separated SDIFF files")
    p.add_argument("--d1", required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--scheme", choices=("mul", "lin"), default="mul")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("analogy", help="synthesize the analogy completion mesh")
    p.add_argument("--da", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--dc", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the decoder on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kinds", default="a,c,e")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="reconstruction metrics d_R, d_V, d_E")
    p.add_argument("--gt", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="generate the synthetic training family")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--k0", type=int, default=60)
    p.add_argument("--scale-range", default="0.6,1.6")
    p.add_argument("--bend-range", default="%.17g,%.17g" % (-np.pi / 3, np.pi / 3))
    p.add_argument("--out", required=True)

    return parser


_COMMANDS = {
    "basis": cmd_basis,
    "diff": cmd_diff,
    "recover": cmd_recover,
    "interp": cmd_interp,
    "analogy": cmd_analogy,
    "train": cmd_train,
    "eval": cmd_eval,
    "generate": cmd_generate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        metric = _COMMANDS[args.command](args)
    except (ShapeOpsError, OSError, ValueError, KeyError) as exc:
        print(f"ERROR {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"OK {args.command} {metric}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
