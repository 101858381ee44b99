"""Pose and box interchange files.

Pose documents are JSON shaped like per-sequence keypoint annotations:

    {
      "joint_set": "posetrack",
      "frames": [
        {"frame_index": 0,
         "instances": [
            {"box": [x, y, w, h], "box_score": 0.9, "score": 0.63,
             "track_id": 3,                       # optional
             "person_id": 1, "head_size": 12.5,   # ground-truth files
             "head_box": [x, y, w, h],            # alternative to head_size
             "keypoints": [x, y, score, ...],     # 3K floats
             "annotated": [1, 0, ...]}            # K bits
         ]}
      ]
    }

Frame indices must be strictly increasing and keypoints length must be 3K of
the declared joint set. head_size may be given directly or derived from
head_box as diagonal x 0.6. Emission is canonical: fixed key order, repr
floats, two-space indentation, so emit(parse(f)) == f byte-wise for files in
canonical form.

Box documents (detector outputs, for box merging) are
{"frames": [{"frame_index": 0, "boxes": [{"box": [...], "score": s}]}]}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import PoseError
from .instances import PersonInstance
from .skeletons import get_joint_set

DEFAULT_HEAD_SIZE_FACTOR = 0.6


@dataclass
class PoseSequence:
    joint_set: str
    frames: list   # [(frame_index, [PersonInstance, ...]), ...]

    def __post_init__(self):
        get_joint_set(self.joint_set)
        last = None
        for frame_index, _ in self.frames:
            if last is not None and frame_index <= last:
                raise PoseError(
                    f"frame indices must be strictly increasing, got {frame_index} after {last}"
                )
            last = frame_index


def _require(cond, message, path, frame=None):
    if not cond:
        raise PoseError(message, path=path, frame=frame)


def parse_pose_document(doc: dict, path=None,
                        head_factor: float = DEFAULT_HEAD_SIZE_FACTOR) -> PoseSequence:
    _require(isinstance(doc, dict), "pose document must be a JSON object", path)
    _require("joint_set" in doc, "pose document missing joint_set", path)
    js = get_joint_set(doc["joint_set"])
    k = js.count
    frames = []
    last = None
    for frame in doc.get("frames", []):
        _require("frame_index" in frame, "frame missing frame_index", path)
        fidx = frame["frame_index"]
        _require(isinstance(fidx, int), "frame_index must be an integer", path)
        _require(last is None or fidx > last,
                 f"frame indices must be strictly increasing ({fidx} after {last})", path)
        last = fidx
        instances = []
        for n, inst in enumerate(frame.get("instances", [])):
            try:
                kps = inst["keypoints"]
                _require(len(kps) == 3 * k,
                         f"instance {n}: keypoints length {len(kps)} != 3*{k}",
                         path, fidx)
                arr = np.asarray(kps, dtype=np.float64).reshape(k, 3)
                annotated = inst.get("annotated")
                if annotated is None:
                    annotated = arr[:, 2] > 0
                else:
                    _require(len(annotated) == k,
                             f"instance {n}: annotated length != {k}", path, fidx)
                    annotated = np.asarray(annotated, dtype=bool)
                head_size = inst.get("head_size")
                if head_size is None and "head_box" in inst:
                    hb = inst["head_box"]
                    head_size = head_factor * math.hypot(float(hb[2]), float(hb[3]))
                instances.append(PersonInstance(
                    box=np.asarray(inst["box"], dtype=np.float64),
                    box_score=float(inst.get("box_score", 1.0)),
                    coords=arr[:, :2],
                    scores=arr[:, 2],
                    annotated=annotated,
                    joint_set=js.name,
                    area=inst.get("area"),
                    score=inst.get("score"),
                    track_id=inst.get("track_id"),
                    person_id=inst.get("person_id"),
                    head_size=head_size,
                ))
            except PoseError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise PoseError(f"instance {n}: {exc}", path=path, frame=fidx) from exc
        frames.append((fidx, instances))
    return PoseSequence(js.name, frames)


def load_pose_file(path, head_factor: float = DEFAULT_HEAD_SIZE_FACTOR) -> PoseSequence:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise PoseError(f"not valid JSON: {exc}", path=path) from exc
    return parse_pose_document(doc, path=path, head_factor=head_factor)


def pose_document(seq: PoseSequence) -> dict:
    frames = []
    for frame_index, instances in seq.frames:
        out = []
        for p in instances:
            kps = []
            for i in range(p.coords.shape[0]):
                kps.extend([float(p.coords[i, 0]), float(p.coords[i, 1]),
                            float(p.scores[i])])
            entry = {
                "box": [float(v) for v in p.box],
                "box_score": float(p.box_score),
                "score": float(p.score),
            }
            if p.track_id is not None:
                entry["track_id"] = int(p.track_id)
            if p.person_id is not None:
                entry["person_id"] = int(p.person_id)
            if p.head_size is not None:
                entry["head_size"] = float(p.head_size)
            entry["keypoints"] = kps
            entry["annotated"] = [int(b) for b in p.annotated]
            out.append(entry)
        frames.append({"frame_index": int(frame_index), "instances": out})
    return {"joint_set": seq.joint_set, "frames": frames}


def emit_pose_file(seq: PoseSequence) -> str:
    return json.dumps(pose_document(seq), indent=2) + "\n"


def save_pose_file(seq: PoseSequence, path) -> None:
    with open(path, "w") as f:
        f.write(emit_pose_file(seq))


@dataclass
class BoxSequence:
    frames: list   # [(frame_index, [(box, score), ...])]


def load_box_file(path) -> BoxSequence:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise PoseError(f"not valid JSON: {exc}", path=path) from exc
    frames = []
    last = None
    for frame in doc.get("frames", []):
        _require("frame_index" in frame, "frame missing frame_index", path)
        fidx = frame["frame_index"]
        _require(last is None or fidx > last, "frame indices must increase", path)
        last = fidx
        boxes = []
        for b in frame.get("boxes", []):
            box = [float(v) for v in b["box"]]
            _require(len(box) == 4 and box[2] > 0 and box[3] > 0,
                     "boxes need positive width/height", path, fidx)
            boxes.append((box, float(b.get("score", 1.0))))
        frames.append((fidx, boxes))
    return BoxSequence(frames)


def emit_box_file(seq: BoxSequence) -> str:
    doc = {"frames": [
        {"frame_index": int(fidx),
         "boxes": [{"box": [float(v) for v in box], "score": float(score)}
                   for box, score in boxes]}
        for fidx, boxes in seq.frames
    ]}
    return json.dumps(doc, indent=2) + "\n"


def save_box_file(seq: BoxSequence, path) -> None:
    with open(path, "w") as f:
        f.write(emit_box_file(seq))
