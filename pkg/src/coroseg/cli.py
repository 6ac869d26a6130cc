"""Command-line front end; every subcommand is a thin wrapper over the library.

Commands: resample, postprocess, skeletonize, evaluate, stats, voxelize,
armature build, cpr, serve.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .armature import armature_to_json, build_armature
from .components import postprocess
from .cpr import cpr
from .errors import CorosegError, InputError
from .mesh import load_mesh, voxelize
from .metrics import build_report, evaluate_case, variant_name
from .skeleton import CenterlineGraph, NodeKind, designate_root, extract_graph, skeletonize
from .stats import mann_whitney_u, wilcoxon_signed_rank
from .volume import WindowSpec, read_volume, resample, window_to_gray, write_volume


def _parse_spacing(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise InputError(f"spacing must be one value or x,y,z — got {text!r}")
    return tuple(parts)


def _parse_window(text: str) -> WindowSpec:
    try:
        low, high = (float(p) for p in text.split(","))
    except ValueError:
        raise InputError(f"window must be low,high — got {text!r}")
    return WindowSpec(low, high)


def _read_reals(path: str) -> list[float]:
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            values.append(float(line))
    return values


def cmd_resample(args) -> int:
    v = read_volume(args.infile)
    write_volume(resample(v, _parse_spacing(args.spacing), args.mode), args.out)
    return 0


def cmd_postprocess(args) -> int:
    mask = read_volume(args.mask, label=True)
    peri = read_volume(args.pericardium, label=True) if args.pericardium else None
    write_volume(postprocess(mask, peri, args.min_volume), args.out)
    return 0


def cmd_skeletonize(args) -> int:
    mask = read_volume(args.infile, label=True)
    skel = skeletonize(mask)
    write_volume(skel, args.out)
    if args.graph:
        extract_graph(skel).save(args.graph)
    return 0


def _parse_filters(text: str) -> tuple[bool, bool]:
    vol50 = pericardium = False
    for token in filter(None, (t.strip() for t in text.split(","))):
        if token == "vol50":
            vol50 = True
        elif token == "pericardium":
            pericardium = True
        elif token != "none":
            raise InputError(f"unknown postprocess filter {token!r}")
    return vol50, pericardium


def cmd_evaluate(args) -> int:
    vol50, use_peri = _parse_filters(args.postprocess)
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds = sorted(pred_dir.glob("*.nii.gz"))
    if not preds:
        raise InputError(f"no .nii.gz masks under {pred_dir}")
    if use_peri and not args.pericardium_dir:
        raise InputError("pericardium filter requested but --pericardium-dir not given")

    spacing = _parse_spacing(args.spacing) if float(args.spacing.split(",")[0]) > 0 else None
    per_case, case_ids = [], []
    for pred_path in preds:
        name = pred_path.name
        gt_path = gt_dir / name
        if not gt_path.is_file():
            raise InputError(f"no ground truth named {name} under {gt_dir}")
        pred = read_volume(pred_path, label=True)
        gt = read_volume(gt_path, label=True)
        peri = None
        if use_peri:
            peri_path = Path(args.pericardium_dir) / name
            if not peri_path.is_file():
                raise InputError(f"no pericardium named {name} under {args.pericardium_dir}")
            peri = read_volume(peri_path, label=True)
        if spacing is not None:
            pred = resample(pred, spacing, "nearest")
            gt = resample(gt, spacing, "nearest")
            peri = resample(peri, spacing, "nearest") if peri is not None else None
        per_case.append(
            evaluate_case(pred, gt, peri, vol50=vol50, use_pericardium=use_peri)
        )
        case_ids.append(name[: -len(".nii.gz")])

    report = build_report(variant_name(vol50, use_peri), per_case, case_ids)
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_stats(args) -> int:
    a = _read_reals(args.a)
    if args.test == "mannwhitney":
        if not args.b:
            raise InputError("mannwhitney needs --b")
        result = mann_whitney_u(a, _read_reals(args.b))
    else:
        result = wilcoxon_signed_rank(a, _read_reals(args.b) if args.b else None)
    print(json.dumps(result.as_dict()))
    return 0


def cmd_voxelize(args) -> int:
    mesh = load_mesh(args.mesh)
    like = read_volume(args.like)
    write_volume(voxelize(mesh, like), args.out)
    return 0


def cmd_armature_build(args) -> int:
    g = CenterlineGraph.load(args.graph)
    if args.root is not None:
        g = designate_root(g, args.root)
    elif not any(n.kind is NodeKind.ROOT for n in g.nodes):
        first = next((i for i, n in enumerate(g.nodes) if n.kind is NodeKind.ENDPOINT), None)
        if first is None:
            raise InputError("graph has no endpoint to use as root; pass --root")
        g = designate_root(g, first)
    arm = build_armature(g, args.max_bone_length)
    Path(args.out).write_text(json.dumps(armature_to_json(arm)))
    return 0


def cmd_cpr(args) -> int:
    from PIL import Image

    v = read_volume(args.volume)
    obj = json.loads(Path(args.path).read_text())
    points = obj["points"] if isinstance(obj, dict) else obj
    img = cpr(v, np.asarray(points, dtype=np.float64), args.half_width, args.ds, args.dt)
    gray = window_to_gray(img.pixels, _parse_window(args.window))
    Image.fromarray(gray, mode="L").save(args.out, format="PNG")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.cases, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coroseg")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("resample", help="regrid a volume to a new spacing")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--spacing", required=True, help="isotropic value or x,y,z")
    sp.add_argument("--mode", choices=["nearest", "trilinear"], default="trilinear")
    sp.set_defaults(func=cmd_resample)

    sp = sub.add_parser("postprocess", help="filter a binary mask by component size/region")
    sp.add_argument("--mask", required=True)
    sp.add_argument("--pericardium")
    sp.add_argument("--min-volume", type=float, default=50.0, help="mm^3 threshold")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_postprocess)

    sp = sub.add_parser("skeletonize", help="thin a mask to unit-width centerlines")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--graph", help="also write the centerline graph JSON here")
    sp.set_defaults(func=cmd_skeletonize)

    sp = sub.add_parser("evaluate", help="score predictions against ground truth")
    sp.add_argument("--pred-dir", required=True)
    sp.add_argument("--gt-dir", required=True)
    sp.add_argument("--pericardium-dir")
    sp.add_argument("--postprocess", default="none", help="comma list: vol50,pericardium")
    sp.add_argument("--spacing", default="0.35", help="common grid; 0 keeps input grids")
    sp.add_argument("--report", help="write the JSON report here instead of stdout")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("stats", help="rank test on newline-separated samples")
    sp.add_argument("--test", choices=["mannwhitney", "wilcoxon"], required=True)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("voxelize", help="rasterize a closed mesh onto a volume grid")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--like", required=True, help="volume defining the target grid")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_voxelize)

    sp = sub.add_parser("armature", help="skeletal rig commands")
    sub2 = sp.add_subparsers(dest="armature_command", required=True)
    spb = sub2.add_parser("build", help="bones from a centerline graph")
    spb.add_argument("--graph", required=True)
    spb.add_argument("--out", required=True)
    spb.add_argument("--root", type=int, help="node index to root the tree at")
    spb.add_argument("--max-bone-length", type=float, default=3.0)
    spb.set_defaults(func=cmd_armature_build)

    sp = sub.add_parser("cpr", help="stretched curved planar reformation PNG")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--path", required=True, help='JSON [[x,y,z],...] or {"points": ...}')
    sp.add_argument("--out", required=True)
    sp.add_argument("--window", default="-120,200")
    sp.add_argument("--half-width", type=float, default=5.0)
    sp.add_argument("--ds", type=float, default=0.35)
    sp.add_argument("--dt", type=float, default=0.35)
    sp.set_defaults(func=cmd_cpr)

    sp = sub.add_parser("serve", help="run the registration HTTP service")
    sp.add_argument("--cases", required=True)
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--host", default="127.0.0.1")
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorosegError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
