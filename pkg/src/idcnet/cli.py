"""``idc``: render scenes, curate clips, train, generate, evaluate and fuse."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .curation import ClipRecord, CurationConfig, curate
from .errors import ConfigError, IDCError
from .evaluation import depth_consistency, report_dict
from .geometry import reproject_depth
from .inference import generate
from .io_formats import read_sequence, read_tensor, read_trajectory, write_sequence, write_tensor
from .pointcloud import export_ply, fuse
from .scenes import SceneSpec, default_intrinsics, make_trajectory, random_room, render_sequence
from .training import RunConfig, build_dataset, load_checkpoint, save_checkpoint, train_stage1, train_stage2


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _load_scene(spec: str) -> SceneSpec:
    """``room:<seed>`` or a path to a scene JSON file."""
    if spec.startswith("room:"):
        return random_room(int(spec[5:]))
    return SceneSpec.from_dict(_load_json(spec))


def _parse_traj(spec: str):
    try:
        kind, n, step = spec.split(",")
        return kind, int(n), float(step)
    except ValueError:
        raise ConfigError(f"--traj expects kind,n,step, got {spec!r}") from None


def cmd_render(args) -> int:
    intr = default_intrinsics(args.height, args.width, args.fov)
    kind, n, step = _parse_traj(args.traj)
    seq = render_sequence(_load_scene(args.scene), make_trajectory(kind, n, step, intr))
    seq.meta.update({"scene": args.scene, "kind": kind})
    write_sequence(args.out, seq)
    return 0


def cmd_curate(args) -> int:
    paths = sorted(Path(args.clips).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no trajectory JSON files in {args.clips}")
    clips = [ClipRecord(p.stem, read_trajectory(p)) for p in paths]
    cfg = CurationConfig(
        min_frames_a=args.min_frames, min_frames_b=args.min_frames, gamma=args.gamma,
        span_threshold=args.span_threshold, span_mode=f"keep-{args.span_mode}",
    )
    report = curate(clips, cfg)
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=1))
    return 0


def _run_config(args) -> RunConfig:
    d = _load_json(args.config) if args.config else {}
    training = dict(d.get("training", {}))
    for key in ("stage", "steps", "seed"):
        if getattr(args, key, None) is not None:
            training[key] = getattr(args, key)
    d["training"] = training
    return RunConfig.from_dict(d)


def cmd_train(args) -> int:
    run = _run_config(args)
    dataset = build_dataset(run.dataset, run.codec)
    if run.training.stage == 1:
        result = train_stage1(run, dataset)
    else:
        if not args.init:
            raise ConfigError("stage 2 needs --init <stage-1 checkpoint>")
        stage1, _, _, _ = load_checkpoint(args.init)
        result = train_stage2(run, stage1, dataset)
    save_checkpoint(args.out, result.model, run, dataset.depth_divisor, run.training.stage)
    result.write_trace(args.trace or f"{args.out}.loss.csv")
    return 0


def cmd_generate(args) -> int:
    model, run, divisor, _ = load_checkpoint(args.ckpt)
    rgb0 = read_tensor(args.image).astype(np.float64)
    depth0 = read_tensor(args.depth).astype(np.float64)
    traj = read_trajectory(args.traj)
    h, w = traj.intrinsics.height, traj.intrinsics.width
    if rgb0.shape != (h, w, 3) or depth0.shape != (h, w):
        raise ConfigError(
            f"first frame {rgb0.shape} / depth {depth0.shape} does not match the {h}x{w} trajectory intrinsics"
        )
    seq = generate(
        model, rgb0, depth0, traj, divisor, run.schedule.build(), run.codec,
        n_steps=args.steps, seed=args.seed, use_camera=not args.no_camera,
    )
    write_sequence(args.out, seq)
    export_ply(fuse(seq, pixel_stride=args.preview_stride), Path(args.out) / "preview.ply")
    return 0


def cmd_evaluate(args) -> int:
    report = report_dict(read_sequence(args.pred), read_sequence(args.gt))
    Path(args.report).write_text(json.dumps(report, indent=1))
    return 0


def cmd_fuse(args) -> int:
    seq = read_sequence(args.seq)
    if args.traj:
        traj = read_trajectory(args.traj)
        if len(traj) != len(seq):
            raise ConfigError(f"trajectory has {len(traj)} poses for {len(seq)} frames")
        seq.trajectory = traj
    cloud = fuse(seq, args.frame_stride, args.stride, args.max_depth)
    export_ply(cloud, args.out)
    return 0


def cmd_reproject_check(args) -> int:
    """Warp frame ``--src`` into ``--dst`` and report how well it matches the stored depth."""
    seq = read_sequence(args.seq)
    n = len(seq)
    if not (0 <= args.src < n and 0 <= args.dst < n):
        raise ConfigError(f"frame indices must lie in [0, {n})")
    traj = seq.trajectory
    warped, _, mask = reproject_depth(traj.intrinsics, traj[args.src], seq.depth[args.src], traj[args.dst])
    target = np.asarray(seq.depth[args.dst], dtype=np.float64)
    sel = mask & (target > 0)
    res = np.abs(warped[sel] - target[sel])
    report = {
        "src": args.src, "dst": args.dst,
        "coverage": float(mask.mean()),
        "mean_residual": float(res.mean()) if res.size else None,
        "max_residual": float(res.max()) if res.size else None,
        "sequence": depth_consistency(seq).to_dict(),
    }
    if args.warped:
        write_tensor(args.warped, warped)
    text = json.dumps(report, indent=1)
    if args.report:
        Path(args.report).write_text(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render", help="ray-cast a scene along a canonical trajectory")
    s.add_argument("--scene", required=True, help="scene JSON path or room:<seed>")
    s.add_argument("--traj", required=True, help="kind,n,step with kind in forward|strafe|orbit")
    s.add_argument("--out", required=True)
    s.add_argument("--height", type=int, default=32)
    s.add_argument("--width", type=int, default=48)
    s.add_argument("--fov", type=float, default=60.0, help="horizontal field of view, degrees")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("curate", help="score and filter trajectory clips")
    s.add_argument("--clips", required=True)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--span-threshold", type=float, default=0.0)
    s.add_argument("--span-mode", choices=["above", "below"], default="above")
    s.add_argument("--min-frames", type=int, default=98)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_curate)

    s = sub.add_parser("train", help="train the denoiser (stage 1 RGB-D, stage 2 camera)")
    s.add_argument("--stage", type=int, choices=[1, 2])
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--init", help="stage-1 checkpoint for stage 2")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--trace", help="loss CSV path (default: <out>.loss.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="sample an RGB-D sequence along a trajectory")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True, help="first-frame RGB tensor (h x w x 3)")
    s.add_argument("--depth", required=True, help="first-frame depth tensor (h x w)")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=50, help="DDIM steps")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-camera", action="store_true", help="ignore the trajectory's camera tokens")
    s.add_argument("--preview-stride", type=int, default=1)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="compare a generated sequence with ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("fuse", help="back-project a sequence into a PLY point cloud")
    s.add_argument("--seq", required=True)
    s.add_argument("--traj", help="override the sequence's own trajectory")
    s.add_argument("--out", required=True)
    s.add_argument("--max-depth", type=float, default=np.inf)
    s.add_argument("--stride", type=int, default=1, help="pixel stride")
    s.add_argument("--frame-stride", type=int, default=1)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("reproject-check", help="warp one frame's depth into another and measure agreement")
    s.add_argument("--seq", required=True)
    s.add_argument("--src", type=int, default=0)
    s.add_argument("--dst", type=int, default=1)
    s.add_argument("--report")
    s.add_argument("--warped", help="write the warped depth tensor here")
    s.set_defaults(func=cmd_reproject_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("IDC_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))
    try:
        return args.func(args)
    except (IDCError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"idc {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
