"""End-to-end pose pipeline over heatmap files.

Stage order is fixed: decode/fuse -> re-score -> thresholds -> OKS-NMS ->
tracking. Each stage is individually switchable through PipelineConfig; a
disabled stage is skipped, nothing is reordered. Given identical config,
inputs and seeds the output file is byte-identical.

The input manifest is JSON:

    {"frames": [
       {"frame_index": 0,
        "instances": [
           {"box": [x, y, w, h], "box_score": 0.93,
            "heatmaps":         {"coco": "f0_p0_coco.pkhm", ...},
            "flipped_heatmaps": {"coco": "f0_p0_coco_flip.pkhm", ...}}]}]}

Heatmap paths are resolved relative to the manifest's directory; the
"flipped_heatmaps" entry is optional and triggers flip-merging per branch.
"""

from __future__ import annotations

import json
import logging
import os

import numpy as np

from .config import PipelineConfig
from .errors import PoseError
from .fusion import BranchOutputs, fuse_head_swap, fuse_select, fuse_vote
from .heatmaps import DecodedPose, flip_merge, load_heatmap
from .instances import PersonInstance
from .poseio import PoseSequence
from .suppression import OksConstants, apply_thresholds, oks_nms, rescore
from .tracking import TrackerConfig, TrackerState, finalize

log = logging.getLogger("posepipe.pipeline")


def load_manifest(path) -> list:
    """[(frame_index, [instance entries])], paths resolved, ordering checked."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise PoseError(f"manifest is not valid JSON: {exc}", path=path) from exc
    base = os.path.dirname(os.path.abspath(path))
    frames = []
    last = None
    for frame in doc.get("frames", []):
        if "frame_index" not in frame:
            raise PoseError("manifest frame missing frame_index", path=path)
        fidx = frame["frame_index"]
        if last is not None and fidx <= last:
            raise PoseError("manifest frame indices must increase", path=path, frame=fidx)
        last = fidx
        entries = []
        for n, inst in enumerate(frame.get("instances", [])):
            if "box" not in inst or "heatmaps" not in inst:
                raise PoseError(f"manifest instance {n} needs box and heatmaps",
                                path=path, frame=fidx)
            entry = {
                "box": [float(v) for v in inst["box"]],
                "box_score": float(inst.get("box_score", 1.0)),
                "heatmaps": {k: os.path.join(base, v)
                             for k, v in inst["heatmaps"].items()},
            }
            if "flipped_heatmaps" in inst:
                entry["flipped_heatmaps"] = {k: os.path.join(base, v)
                                             for k, v in inst["flipped_heatmaps"].items()}
            entries.append(entry)
        frames.append((fidx, entries))
    return frames


def _fuse_instance(entry, config: PipelineConfig) -> DecodedPose:
    branches = {}
    for name in sorted(entry["heatmaps"]):
        h = load_heatmap(entry["heatmaps"][name])
        if h.joint_set != name:
            raise PoseError(
                f"manifest branch {name!r} points at a {h.joint_set!r} heatmap"
            )
        flipped = entry.get("flipped_heatmaps", {}).get(name)
        if flipped is not None:
            h = flip_merge(h, load_heatmap(flipped))
        branches[name] = h
    b = BranchOutputs(branches)
    sigma = config.smooth_sigma if config.use_gaussian_filter else 0.0
    quarter = config.use_quarter_offset
    kind, _, arg = config.fusion.partition(":")
    if kind == "select":
        return fuse_select(b, arg, config.target_joint_set, sigma, quarter,
                           (config.head_bottom_coef, config.head_top_coef))
    if kind == "head-swap":
        body, _, head = arg.partition(",")
        return fuse_head_swap(b, body, head, config.target_joint_set, sigma, quarter)
    return fuse_vote(b, config.target_joint_set, sigma, quarter)


def _to_instance(decoded: DecodedPose, box, box_score: float) -> PersonInstance:
    return PersonInstance(
        box=np.asarray(box, dtype=np.float64),
        box_score=box_score,
        coords=decoded.coords,
        scores=np.clip(decoded.scores, 0.0, 1.0),
        annotated=decoded.annotated,
        joint_set=decoded.joint_set,
    )


def run_pipeline(config: PipelineConfig, manifest_frames) -> PoseSequence:
    """Run the fixed stage order over manifest frames (see load_manifest)."""
    enabled = [
        "decode+fuse",
        "rescore" if config.use_box_rescore else None,
        "thresholds",
        "oks-nms" if config.use_oks_nms else None,
        "track" if config.use_tracking else None,
    ]
    log.info("pipeline stages: %s", " -> ".join(s for s in enabled if s))

    consts = OksConstants.for_joint_set(
        config.target_joint_set,
        overrides=config.oks_falloff_overrides,
        extra_falloff=config.oks_extra_falloff,
    )
    box_thr = config.box_threshold if config.use_box_threshold else 0.0
    kp_thr = config.keypoint_threshold if config.use_keypoint_threshold else 0.0

    frames = []
    for fidx, entries in manifest_frames:
        instances = []
        for entry in entries:
            decoded = _fuse_instance(entry, config)
            instances.append(_to_instance(decoded, entry["box"], entry["box_score"]))
        if config.use_box_rescore:
            instances = [rescore(p) for p in instances]
        instances = apply_thresholds(instances, box_thr, kp_thr)
        if config.use_oks_nms:
            keep = oks_nms(instances, config.oks_nms_threshold, consts)
            instances = [instances[i] for i in keep]
        frames.append((fidx, instances))

    if config.use_tracking:
        tracker = TrackerState(consts, TrackerConfig(
            sim_threshold=config.similarity_threshold,
            lookback=config.lookback,
            matcher=config.matcher,
            propagator=config.propagator,
        ))
        tracked = []
        for fidx, instances in frames:
            ids = tracker.step(fidx, instances)
            tracked.append((fidx, [p.replace(track_id=t)
                                   for p, t in zip(instances, ids)]))
        min_len = config.min_track_length if config.use_tracklet_pruning else 1
        kept_ids = {t.id for t in finalize(tracker, min_len)}
        frames = [(fidx, [p for p in instances if p.track_id in kept_ids])
                  for fidx, instances in tracked]

    return PoseSequence(config.target_joint_set, frames)
