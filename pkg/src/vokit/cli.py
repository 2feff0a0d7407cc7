"""Command-line entry point: synthesis, gating, evaluation, and Fisher math.

Exit codes: 0 success, 1 usage error, 2 data error.  All subcommands are
deterministic: identical arguments (and --seed where randomness exists)
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import Intrinsics
from .config import ToolkitConfig, load_config
from .fisher import log_norm_const, mode, nll
from .io import (
    FormatError,
    KITTI_ROTATION_TOL,
    dumps_json,
    read_depth,
    read_features,
    read_image,
    read_kitti_poses,
    read_manifest,
    resolve_manifest_path,
    write_depth,
    write_features,
    write_flow,
    write_image,
    write_json,
    write_kitti_poses,
    write_manifest,
)
from .metrics import evaluate
from .photometric import WarpSample, geom_gate
from .se3 import Pose, accumulate, nearest_rotation, relative, rotation_defect
from .subspace import lang_gate
from .synth import SceneSpec, analytic_flow, make_trajectory, render

FORMAT_VERSION = 1

FEATURE_ROWS = 15
FEATURE_DIM = 768


def _pose_from_flat(vals, where: str) -> Pose:
    arr = np.asarray(vals, dtype=np.float64)
    if arr.shape != (12,):
        raise FormatError(f"{where}: pose must hold 12 numbers, got {arr.size}")
    m = arr.reshape(3, 4)
    rot, trans = m[:, :3], m[:, 3]
    if rotation_defect(rot) > KITTI_ROTATION_TOL:
        raise FormatError(f"{where}: pose rotation not orthonormal within {KITTI_ROTATION_TOL:g}")
    if np.linalg.det(rot) <= 0.0:
        raise FormatError(f"{where}: pose rotation is a reflection")
    return Pose(nearest_rotation(rot), trans)


def _pose_to_flat(pose: Pose) -> list:
    return np.hstack([pose.rot, pose.trans[:, None]]).reshape(-1).tolist()


def _intrinsics_from(entry, manifest_path, where: str) -> Intrinsics:
    if isinstance(entry, str):
        try:
            entry = json.loads(resolve_manifest_path(manifest_path, entry).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"{where}: cannot read intrinsics: {e}") from None
    if not isinstance(entry, dict):
        raise FormatError(f"{where}: intrinsics must be an object or a file reference")
    try:
        return Intrinsics(**entry)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{where}: bad intrinsics: {e}") from None


def _emit(records, out_path) -> None:
    if out_path:
        write_manifest(out_path, records)
    else:
        for rec in records:
            sys.stdout.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _require(rec: dict, keys, where: str) -> None:
    absent = [k for k in keys if k not in rec]
    if absent:
        raise FormatError(f"{where}: record {rec.get('id')!r} lacks {', '.join(absent)}")
    gone = [k for k in rec.get("missing", []) if k in keys]
    if gone:
        raise FormatError(f"{where}: record {rec['id']!r} references missing files: {', '.join(gone)}")


def cmd_evaluate(args, cfg: ToolkitConfig) -> int:
    if args.format != "kitti":
        raise FormatError(f"unsupported pose format {args.format!r}")
    gt = read_kitti_poses(args.gt)
    est = read_kitti_poses(args.est)
    if len(gt) != len(est):
        raise FormatError(f"pose count mismatch: {len(gt)} ground-truth vs {len(est)} estimated")
    if len(gt) < 2:
        raise FormatError("need at least two poses to evaluate")
    gt_rels = [relative(gt, i, 1) for i in range(len(gt) - 1)]
    est_rels = [relative(est, i, 1) for i in range(len(est) - 1)]
    report = evaluate(gt_rels, est_rels, align=args.align or cfg.ate_align)
    text = dumps_json(report.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.table:
        rows = ["length,t_err_percent,r_err_deg_per_100m"]
        for length, (t_err, r_err) in sorted(report.per_length.items()):
            rows.append(f"{int(length)},{t_err:.17g},{r_err:.17g}")
        Path(args.table).write_text("\n".join(rows) + "\n")
    return 0


def cmd_filter_geom(args, cfg: ToolkitConfig) -> int:
    threshold = cfg.geom_threshold if args.threshold is None else args.threshold
    records = read_manifest(args.manifest)
    out = []
    for rec in records:
        where = args.manifest
        _require(rec, ("prev_image", "cur_image", "depth", "intrinsics", "pose"), where)
        cam = _intrinsics_from(rec["intrinsics"], args.manifest, where)
        sample = WarpSample(
            prev_image=read_image(resolve_manifest_path(args.manifest, rec["prev_image"])),
            cur_image=read_image(resolve_manifest_path(args.manifest, rec["cur_image"])),
            depth=read_depth(resolve_manifest_path(args.manifest, rec["depth"])),
            cam_prev=cam,
            cam_cur=cam,
            pose=_pose_from_flat(rec["pose"], f"{where}: record {rec['id']!r}"),
        )
        decision = geom_gate(sample, threshold, **cfg.ssim_kwargs())
        out.append({**rec, "keep": decision.keep, "score": decision.score, "reason": decision.reason})
    _emit(out, args.out)
    return 0


def cmd_filter_lang(args, cfg: ToolkitConfig) -> int:
    horizon = cfg.lang_window if args.window is None else args.window
    tau = cfg.lang_tau if args.tau is None else args.tau
    records = read_manifest(args.manifest)
    mats = []
    for rec in records:
        _require(rec, ("features",), args.manifest)
        mats.append(read_features(resolve_manifest_path(args.manifest, rec["features"])))
    out = []
    for i in range(max(0, len(mats) - horizon)):
        decision = lang_gate(mats[i : i + horizon + 1], tau, horizon, cfg.lang_keep_below)
        out.append(
            {
                "id": f"window_{i:04d}",
                "start": records[i]["id"],
                "end": records[i + horizon]["id"],
                "keep": decision.keep,
                "score": decision.score,
                "reason": decision.reason,
            }
        )
    _emit(out, args.out)
    return 0


def cmd_synth(args, cfg: ToolkitConfig) -> int:
    try:
        data = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{args.spec}: invalid JSON: {e}") from None
    try:
        spec = SceneSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{args.spec}: bad scene spec: {e}") from None

    out = Path(args.out)
    for sub in ("images", "depth", "flow", "features"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    rels = make_trajectory(spec)
    traj = accumulate(rels)
    cam = spec.cam

    frame_records = []
    for i, pose in enumerate(traj):
        img, depth = render(spec, pose)
        write_image(out / "images" / f"frame_{i:04d}.png", img)
        write_depth(out / "depth" / f"frame_{i:04d}.f32", depth)
        feats = np.random.default_rng([args.seed, i]).standard_normal((FEATURE_ROWS, FEATURE_DIM))
        write_features(out / "features" / f"frame_{i:04d}.zvfm", feats)
        frame_records.append(
            {
                "id": f"frame_{i:04d}",
                "image": f"images/frame_{i:04d}.png",
                "depth": f"depth/frame_{i:04d}.f32",
                "features": f"features/frame_{i:04d}.zvfm",
            }
        )

    cam_dict = {"fu": cam.fu, "fv": cam.fv, "cu": cam.cu, "cv": cam.cv, "width": cam.width, "height": cam.height}
    pair_records = []
    for i, rel in enumerate(rels):
        flow, _ = analytic_flow(spec, traj[i], traj[i + 1])
        write_flow(out / "flow" / f"flow_{i:04d}.f32", flow)
        pair_records.append(
            {
                "id": f"pair_{i:04d}",
                "prev_image": f"images/frame_{i:04d}.png",
                "cur_image": f"images/frame_{i + 1:04d}.png",
                "depth": f"depth/frame_{i + 1:04d}.f32",
                "flow": f"flow/flow_{i:04d}.f32",
                "intrinsics": cam_dict,
                "pose": _pose_to_flat(rel),
            }
        )

    write_kitti_poses(out / "poses_gt.txt", traj)
    write_manifest(out / "manifest.jsonl", pair_records)
    write_manifest(out / "frames.jsonl", frame_records)
    write_json(out / "scene.json", spec.to_dict())
    sys.stdout.write(f"wrote {len(traj)} frames, {len(rels)} pairs\n")
    return 0


def _nine(text_arg, file_arg, name: str) -> np.ndarray:
    if (text_arg is None) == (file_arg is None):
        raise FormatError(f"give exactly one of --{name} or --{name}-file")
    if file_arg is not None:
        text_arg = Path(file_arg).read_text()
    fields = text_arg.replace(",", " ").split()
    if len(fields) != 9:
        raise FormatError(f"{name}: expected 9 numbers, got {len(fields)}")
    try:
        vals = np.array([float(x) for x in fields])
    except ValueError:
        raise FormatError(f"{name}: non-numeric entry") from None
    return vals.reshape(3, 3)


def cmd_fisher(args, cfg: ToolkitConfig) -> int:
    psi = _nine(args.psi, args.psi_file, "psi")
    report = {"log_c": log_norm_const(psi), "mode": mode(psi).tolist()}
    if args.rot is not None or args.rot_file is not None:
        r = _nine(args.rot, args.rot_file, "rot")
        if rotation_defect(r) > KITTI_ROTATION_TOL or np.linalg.det(r) <= 0:
            raise FormatError("rot: not a proper rotation")
        report["nll"] = nll(nearest_rotation(r), psi)
    sys.stdout.write(dumps_json(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for any randomized step")
    common.add_argument("--config", help="JSON file overriding default thresholds")

    parser = argparse.ArgumentParser(prog="vokit", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version",
        action="version",
        version=f"vokit {__version__} (formats v{FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="score an estimated trajectory against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--format", default="kitti")
    p.add_argument("--align", action="store_true", help="rigidly align before ATE")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--table", help="also write a per-length CSV table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("filter-geom", parents=[common], help="gate warp samples by normalized similarity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="write the annotated manifest here instead of stdout")
    p.set_defaults(func=cmd_filter_geom)

    p = sub.add_parser("filter-lang", parents=[common], help="gate feature windows by subspace divergence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--window", type=int, help="temporal horizon")
    p.add_argument("--tau", type=float, help="subspace distance threshold")
    p.add_argument("--out", help="write window decisions here instead of stdout")
    p.set_defaults(func=cmd_filter_lang)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic sequence with full ground truth")
    p.add_argument("--spec", required=True, help="scene description JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fisher", parents=[common], help="normalizer, mode, and NLL for one parameter matrix")
    p.add_argument("--psi", help="9 numbers, row-major")
    p.add_argument("--psi-file")
    p.add_argument("--rot", help="9 numbers, row-major rotation for the NLL")
    p.add_argument("--rot-file")
    p.set_defaults(func=cmd_fisher)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if not e.code else 1
    try:
        cfg = load_config(getattr(args, "config", None))
        return args.func(args, cfg)
    except (FormatError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(run())
