"""Command-line interface.

Subcommands cover the whole pipeline: synth (make a synthetic sequence),
train-toy (multi-domain toy training), decode, fuse, merge-boxes, nms, track,
eval-map, eval-mota, and run (manifest -> tracked pose file). Errors print a
one-line JSON report on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import PipelineConfig
from .errors import PoseError
from .evaluation import compute_map, compute_mota, format_table, report_to_dict
from .fusion import BranchOutputs, fuse_head_swap, fuse_select, fuse_vote
from .heatmaps import decode, flip_merge, load_heatmap
from .instances import PersonInstance
from .pipeline import load_manifest, run_pipeline
from .poseio import (
    BoxSequence,
    PoseSequence,
    load_box_file,
    load_pose_file,
    save_box_file,
    save_pose_file,
)
from .suppression import OksConstants, box_nms, oks_nms
from .scenes import generate_scene
from .synthetic import DEFAULT_DOMAINS, DomainSpec, gen_synthetic
from .toynet import NetConfig, save_network
from .tracking import TrackerConfig, TrackerState, finalize
from .training import (
    Stage,
    TrainSchedule,
    staged_schedule,
    mixed_schedule,
    multi_domain_schedule,
    single_domain_schedule,
    train,
    transfer_schedule,
)


def _decoded_to_instance(decoded, box_score=1.0):
    ann = decoded.annotated
    if ann.any():
        lo = decoded.coords[ann].min(axis=0) - 1.0
        hi = decoded.coords[ann].max(axis=0) + 1.0
        box = [float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])]
    else:
        box = [0.0, 0.0, 1.0, 1.0]
    return PersonInstance(
        box=np.asarray(box),
        box_score=box_score,
        coords=decoded.coords,
        scores=np.clip(decoded.scores, 0.0, 1.0),
        annotated=ann,
        joint_set=decoded.joint_set,
    )


def cmd_synth(args):
    manifest, gt = generate_scene(
        args.out, num_frames=args.frames, num_persons=args.persons,
        seed=args.seed, sigma=args.sigma,
        with_flipped=not args.no_flipped,
        with_weak_joints=not args.no_weak_joints,
        with_clutter=not args.no_clutter,
    )
    print(json.dumps({"manifest": manifest, "gt": gt}))


def _stage_from_dict(doc):
    return Stage(
        name=doc.get("name", "stage"),
        domains=tuple(doc["domains"]),
        trainable=("all" if doc.get("trainable", "all") == "all"
                   else tuple(doc["trainable"])),
        loss=doc.get("loss", "l2"),
        ohkm_k=doc.get("ohkm_k", 8),
        steps=doc["steps"],
        lr=doc.get("lr", 1.2),
        batch_size=doc.get("batch_size", 8),
    )


def _schedule_from_config(doc):
    if "stages" in doc:
        return TrainSchedule([_stage_from_dict(s) for s in doc["stages"]])
    preset = doc.get("preset", "staged")
    domains = tuple(doc.get("domains", ("coco", "mpii", "posetrack")))
    lr = doc.get("lr", 1.2)
    batch = doc.get("batch_size", 8)
    if preset == "staged":
        return staged_schedule(domains, doc.get("primary", "coco"),
                             tuple(doc.get("steps", (2000, 300, 400))), lr, batch)
    if preset == "single":
        return single_domain_schedule(doc["domain"], doc.get("steps", 2000), lr, batch)
    if preset == "multi":
        return multi_domain_schedule(domains, doc.get("steps", 2000), lr, batch)
    if preset == "mixed":
        return mixed_schedule(domains, doc.get("steps", 2000), lr, batch)
    if preset == "transfer":
        return transfer_schedule(doc["source"], doc["target"],
                                 tuple(doc.get("steps", (2000, 400))), lr, batch)
    raise PoseError(f"unknown schedule preset {preset!r}")


def cmd_train_toy(args):
    with open(args.config) as f:
        doc = json.load(f)
    domain_specs = {}
    for name, d in doc.get("domains", {n: {} for n in ("coco", "mpii", "posetrack")}).items():
        base = DEFAULT_DOMAINS.get(name)
        merged = {
            "contrast": d.get("contrast", base.contrast if base else 1.0),
            "noise": d.get("noise", base.noise if base else 0.05),
            "offset": tuple(d.get("offset", base.offset if base else (0.0, 0.0))),
            "label_noise": d.get("label_noise", 0.0),
            "occlusion": d.get("occlusion", 0.0),
            "target_sigma": d.get("target_sigma", 2.0),
        }
        domain_specs[name] = DomainSpec(name, **merged)
    sizes = doc.get("train_sizes", {n: 200 for n in domain_specs})
    heldout_sizes = doc.get("heldout_sizes", {n: 50 for n in domain_specs})
    data_seed = doc.get("data_seed", 5)
    heldout_seed = doc.get("heldout_seed", 995)
    datasets = {n: gen_synthetic(domain_specs[n], sizes[n], data_seed)
                for n in domain_specs}
    heldout = {n: gen_synthetic(domain_specs[n], heldout_sizes[n], heldout_seed)
               for n in domain_specs}
    net_doc = doc.get("net", {})
    config = NetConfig(
        in_channels=net_doc.get("in_channels", 1),
        hidden=net_doc.get("hidden", 16),
        height=net_doc.get("height", 32),
        width=net_doc.get("width", 24),
        domains=tuple(net_doc.get("domains", tuple(domain_specs))),
        dilation=net_doc.get("dilation", 1),
    )
    schedule = _schedule_from_config(doc.get("schedule", {}))
    if args.log:
        open(args.log, "w").close()   # truncate; train appends
    net, log = train(schedule, datasets, seed=args.seed, config=config,
                     heldout=heldout, log_path=args.log,
                     heldout_reference=doc.get("heldout_reference", "annotation"))
    if args.out:
        save_network(net, args.out)
    print(json.dumps({"stages": len(schedule.stages), "final": log[-1]}))


def cmd_decode(args):
    h = load_heatmap(args.heatmap)
    d = decode(h, args.smooth_sigma, not args.no_quarter_offset)
    seq = PoseSequence(d.joint_set, [(0, [_decoded_to_instance(d)])])
    save_pose_file(seq, args.out)


def _parse_branch_args(pairs):
    out = {}
    for spec in pairs or []:
        name, _, path = spec.partition("=")
        if not path:
            raise PoseError(f"expected NAME=PATH, got {spec!r}")
        out[name] = path
    return out


def cmd_fuse(args):
    branch_paths = _parse_branch_args(args.branch)
    flipped_paths = _parse_branch_args(args.flipped)
    branches = {}
    for name, path in sorted(branch_paths.items()):
        h = load_heatmap(path)
        if name in flipped_paths:
            h = flip_merge(h, load_heatmap(flipped_paths[name]))
        branches[name] = h
    b = BranchOutputs(branches)
    kind, _, arg = args.strategy.partition(":")
    if kind == "select":
        d = fuse_select(b, arg, args.target, args.smooth_sigma,
                        not args.no_quarter_offset)
    elif kind == "head-swap":
        body, _, head = arg.partition(",")
        d = fuse_head_swap(b, body, head, args.target, args.smooth_sigma,
                           not args.no_quarter_offset)
    elif kind == "vote":
        d = fuse_vote(b, args.target, args.smooth_sigma, not args.no_quarter_offset)
    else:
        raise PoseError(f"unknown fusion strategy {args.strategy!r}")
    seq = PoseSequence(d.joint_set, [(0, [_decoded_to_instance(d)])])
    save_pose_file(seq, args.out)


def cmd_merge_boxes(args):
    inputs = [load_box_file(p) for p in args.inputs]
    by_frame = {}
    for seq in inputs:
        for fidx, boxes in seq.frames:
            by_frame.setdefault(fidx, []).extend(boxes)
    frames = []
    for fidx in sorted(by_frame):
        boxes = by_frame[fidx]
        keep = box_nms([b for b, _ in boxes], [s for _, s in boxes], args.iou_thr)
        frames.append((fidx, [boxes[i] for i in keep]))
    save_box_file(BoxSequence(frames), args.out)


def cmd_nms(args):
    seq = load_pose_file(args.input)
    consts = OksConstants.for_joint_set(seq.joint_set)
    frames = []
    for fidx, instances in seq.frames:
        keep = oks_nms(instances, args.oks_thr, consts)
        frames.append((fidx, [instances[i] for i in keep]))
    save_pose_file(PoseSequence(seq.joint_set, frames), args.out)


def cmd_track(args):
    seq = load_pose_file(args.input)
    consts = OksConstants.for_joint_set(seq.joint_set)
    state = TrackerState(consts, TrackerConfig(
        sim_threshold=args.sim_thr, lookback=args.lookback,
        matcher=args.matcher, propagator=args.propagator,
    ))
    tracked = []
    for fidx, instances in seq.frames:
        ids = state.step(fidx, instances)
        tracked.append((fidx, [p.replace(track_id=t)
                               for p, t in zip(instances, ids)]))
    kept = {t.id for t in finalize(state, args.min_len)}
    frames = [(fidx, [p for p in instances if p.track_id in kept])
              for fidx, instances in tracked]
    save_pose_file(PoseSequence(seq.joint_set, frames), args.out)


def _eval_common(args, kind):
    pred = load_pose_file(args.pred)
    gt = load_pose_file(args.gt)
    if pred.joint_set != gt.joint_set:
        raise PoseError(
            f"prediction joint set {pred.joint_set!r} != ground truth {gt.joint_set!r}"
        )
    fn = compute_map if kind == "map" else compute_mota
    report = fn(pred.frames, gt.frames, joint_set=gt.joint_set,
                threshold=args.pckh_thr)
    print(format_table(report, kind))
    if args.json:
        with open(args.json, "w") as f:
            json.dump(report_to_dict(report, kind), f, indent=2)
            f.write("\n")


def cmd_eval_map(args):
    _eval_common(args, "map")


def cmd_eval_mota(args):
    _eval_common(args, "mota")


def cmd_run(args):
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    frames = load_manifest(args.manifest)
    seq = run_pipeline(config, frames)
    save_pose_file(seq, args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="posepipe",
                                description="multi-domain pose pipeline tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic heatmap sequence")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=5)
    s.add_argument("--persons", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=2.5,
                   help="render sigma in heatmap cells")
    s.add_argument("--no-flipped", action="store_true")
    s.add_argument("--no-weak-joints", action="store_true")
    s.add_argument("--no-clutter", action="store_true")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train-toy", help="train the toy multi-domain network")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="checkpoint path")
    s.add_argument("--log", help="JSON-lines metrics log path")
    s.set_defaults(fn=cmd_train_toy)

    s = sub.add_parser("decode", help="decode one heatmap file to a pose")
    s.add_argument("--heatmap", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--smooth-sigma", type=float, default=1.0)
    s.add_argument("--no-quarter-offset", action="store_true")
    s.set_defaults(fn=cmd_decode)

    s = sub.add_parser("fuse", help="fuse branch heatmaps into one pose")
    s.add_argument("--strategy", required=True,
                   help="select:<branch> | head-swap:<body>,<head> | vote")
    s.add_argument("--target", required=True)
    s.add_argument("--branch", action="append", metavar="NAME=PATH")
    s.add_argument("--flipped", action="append", metavar="NAME=PATH")
    s.add_argument("--smooth-sigma", type=float, default=1.0)
    s.add_argument("--no-quarter-offset", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fuse)

    s = sub.add_parser("merge-boxes", help="merge detector box files with IoU NMS")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--iou-thr", type=float, default=0.6)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_merge_boxes)

    s = sub.add_parser("nms", help="OKS-NMS over a pose file")
    s.add_argument("input")
    s.add_argument("--oks-thr", type=float, default=0.4)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_nms)

    s = sub.add_parser("track", help="associate identities across frames")
    s.add_argument("input")
    s.add_argument("--matcher", choices=("hungarian", "greedy"), default="hungarian")
    s.add_argument("--propagator", choices=("identity", "velocity"), default="velocity")
    s.add_argument("--sim-thr", type=float, default=0.3)
    s.add_argument("--lookback", type=int, default=8)
    s.add_argument("--min-len", type=int, default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_track)

    for name, fn in (("eval-map", cmd_eval_map), ("eval-mota", cmd_eval_mota)):
        s = sub.add_parser(name, help=f"{name} over prediction and ground truth")
        s.add_argument("--pred", required=True)
        s.add_argument("--gt", required=True)
        s.add_argument("--pckh-thr", type=float, default=0.5)
        s.add_argument("--json", help="also write a machine-readable report")
        s.set_defaults(fn=fn)

    s = sub.add_parser("run", help="full pipeline over a heatmap manifest")
    s.add_argument("--config")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.fn(args)
    except PoseError as exc:
        print(json.dumps({"error": str(exc), "kind": "contract"}), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": str(exc), "kind": "io"}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
