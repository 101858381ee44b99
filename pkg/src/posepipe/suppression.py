"""OKS similarity, greedy OKS-NMS, box IoU NMS, box re-scoring, thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoseError
from .instances import PersonInstance
from .skeletons import canonical_name, get_joint_set

# Per-joint fall-off constants for the COCO vocabulary (the familiar
# keypoint-similarity sigmas). Joints outside COCO default to 0.079.
_COCO_FALLOFF = {
    "nose": 0.026,
    "left_eye": 0.025, "right_eye": 0.025,
    "left_ear": 0.035, "right_ear": 0.035,
    "left_shoulder": 0.079, "right_shoulder": 0.079,
    "left_elbow": 0.072, "right_elbow": 0.072,
    "left_wrist": 0.062, "right_wrist": 0.062,
    "left_hip": 0.107, "right_hip": 0.107,
    "left_knee": 0.087, "right_knee": 0.087,
    "left_ankle": 0.089, "right_ankle": 0.089,
}
DEFAULT_EXTRA_FALLOFF = 0.079


@dataclass(frozen=True)
class OksConstants:
    """Per-joint fall-off constants k_i for one joint set."""

    joint_set: str
    falloff: np.ndarray   # (K,) > 0

    def __post_init__(self):
        object.__setattr__(self, "falloff", np.asarray(self.falloff, dtype=np.float64))
        k = get_joint_set(self.joint_set).count
        if self.falloff.shape != (k,):
            raise PoseError("fall-off constants length does not match joint set")
        if np.any(self.falloff <= 0):
            raise PoseError("fall-off constants must be positive")

    @classmethod
    def for_joint_set(cls, name: str, overrides=None,
                      extra_falloff: float = DEFAULT_EXTRA_FALLOFF) -> "OksConstants":
        """COCO-standard constants where the joint exists in COCO, otherwise
        ``extra_falloff``; ``overrides`` maps joint name to a replacement value.
        """
        js = get_joint_set(name)
        overrides = overrides or {}
        values = []
        for joint in js.joints:
            key = canonical_name(joint)
            v = overrides.get(joint, overrides.get(key))
            if v is None:
                v = _COCO_FALLOFF.get(key, extra_falloff)
            values.append(float(v))
        return cls(name, np.array(values))


def oks(a: PersonInstance, b: PersonInstance, consts: OksConstants) -> float:
    """Keypoint similarity of b to reference a, normalized by a's area.

    Mean over jointly annotated joints of exp(-d^2 / (2 area k^2)); 0.0 when
    no joint is annotated in both.
    """
    if a.joint_set != b.joint_set or a.joint_set != consts.joint_set:
        raise PoseError(
            f"oks joint-set mismatch: {a.joint_set!r}, {b.joint_set!r}, {consts.joint_set!r}"
        )
    if a.area <= 0:
        raise PoseError("reference instance area must be positive")
    shared = a.annotated & b.annotated
    if not shared.any():
        return 0.0
    d2 = np.sum((a.coords[shared] - b.coords[shared]) ** 2, axis=1)
    k2 = consts.falloff[shared] ** 2
    return float(np.mean(np.exp(-d2 / (2.0 * a.area * k2))))


def oks_nms(instances, threshold: float, consts: OksConstants):
    """Greedy duplicate-pose suppression.

    Instances are visited in descending instance score (input order breaks
    ties); each kept instance suppresses everything with OKS >= threshold to
    it. Returns kept indices in visit order.
    """
    if not 0 < threshold <= 1:
        raise PoseError("oks-nms threshold must be in (0, 1]")
    if not instances:
        return []
    scores = np.array([p.score for p in instances], dtype=np.float64)
    order = list(np.argsort(-scores, kind="stable"))
    keep = []
    while order:
        i = order.pop(0)
        keep.append(int(i))
        order = [j for j in order if oks(instances[i], instances[j], consts) < threshold]
    return keep


def box_iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def box_nms(boxes, scores, threshold: float):
    """Greedy IoU suppression over (x, y, w, h) boxes, score-descending with
    input order breaking ties. Returns kept indices in visit order."""
    if not 0 < threshold <= 1:
        raise PoseError("box-nms threshold must be in (0, 1]")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if boxes.shape[0] != scores.shape[0]:
        raise PoseError("boxes and scores length mismatch")
    order = list(np.argsort(-scores, kind="stable"))
    keep = []
    while order:
        i = order.pop(0)
        keep.append(int(i))
        order = [j for j in order if box_iou(boxes[i], boxes[j]) < threshold]
    return keep


def rescore(p: PersonInstance) -> PersonInstance:
    """Instance score = box score x mean keypoint score over annotated joints
    (0 with no annotated joint)."""
    if p.num_annotated == 0:
        return p.replace(score=0.0)
    return p.replace(score=float(p.box_score * p.scores[p.annotated].mean()))


def apply_thresholds(instances, box_thr: float, kp_thr: float):
    """Drop instances scoring below box_thr; mark joints scoring below kp_thr
    not-annotated (removing them from output and tracking similarity)."""
    if box_thr < 0 or kp_thr < 0:
        raise PoseError("thresholds must be >= 0")
    out = []
    for p in instances:
        if p.score < box_thr:
            continue
        if kp_thr > 0:
            annotated = p.annotated & (p.scores >= kp_thr)
            p = p.replace(annotated=annotated)
        out.append(p)
    return out
