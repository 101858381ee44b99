"""Per-joint average precision and per-joint tracking accuracy.

Protocol (all constants config-exposed):

* A predicted joint is correct when its distance to the ground-truth joint is
  at most 0.5 x the person's head reference size (head-box diagonal x 0.6,
  computed upstream).
* Poses are matched per frame, greedily, by descending count of correct
  joints; ties prefer the smaller mean normalized distance, then the smaller
  (prediction, ground-truth) index pair. Pairs with zero correct joints stay
  unmatched.
* AP ranks every reported prediction joint by its keypoint score over the
  whole dataset and integrates the interpolated precision-recall curve.
* MOTA counts per-joint misses, false positives and identity switches against
  the per-joint ground-truth total; MOTP averages the matched distances as a
  percentage of the correctness threshold (lower is better).

Joints with no annotated ground truth are excluded from every mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PoseError
from .skeletons import canonical_name, get_joint_set

PCKH_THRESHOLD = 0.5

# Column grouping used by the report tables.
_JOINT_GROUPS = (
    ("Head", ("nose", "head_top", "upper_neck", "left_eye", "right_eye",
              "left_ear", "right_ear")),
    ("Shoulder", ("left_shoulder", "right_shoulder")),
    ("Elbow", ("left_elbow", "right_elbow")),
    ("Wrist", ("left_wrist", "right_wrist")),
    ("Hip", ("left_hip", "right_hip", "pelvis")),
    ("Knee", ("left_knee", "right_knee")),
    ("Ankle", ("left_ankle", "right_ankle")),
)


@dataclass
class GroundTruthFrame:
    """Annotated people of one frame; every instance carries person_id and
    head_size."""

    frame_index: int
    instances: list

    def __post_init__(self):
        ids = []
        for g in self.instances:
            if g.person_id is None:
                raise PoseError(f"ground-truth instance missing person_id", frame=self.frame_index)
            if g.head_size is None or g.head_size <= 0:
                raise PoseError(
                    f"ground-truth person {g.person_id} needs a positive head_size",
                    frame=self.frame_index,
                )
            ids.append(g.person_id)
        if len(set(ids)) != len(ids):
            raise PoseError("duplicate person ids in frame", frame=self.frame_index)


@dataclass
class EvalReport:
    """Per-joint AP and/or MOT numbers plus their joint-mean totals.

    Per-joint entries are None for joints with no annotated ground truth.
    All values are percentages; MOTA may be negative.
    """

    joint_set: str
    ap: dict = None
    map_total: float = None
    mota: dict = None
    mota_total: float = None
    motp_total: float = None
    precision: dict = None
    precision_total: float = None
    recall: dict = None
    recall_total: float = None
    counts: dict = field(default_factory=dict)

    def merged_ap(self) -> dict:
        return _group_columns(self.joint_set, self.ap)

    def merged_mota(self) -> dict:
        return _group_columns(self.joint_set, self.mota)


def pckh_distance(pred_joint, gt_joint, head_size: float) -> float:
    """Euclidean distance normalized by the head reference size."""
    if head_size <= 0:
        raise PoseError("head size must be positive")
    p = np.asarray(pred_joint, dtype=np.float64)
    g = np.asarray(gt_joint, dtype=np.float64)
    return float(np.linalg.norm(p - g) / head_size)


def _mean_defined(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _group_columns(joint_set, per_joint):
    if per_joint is None:
        return None
    js = get_joint_set(joint_set)
    out = {}
    for group, members in _JOINT_GROUPS:
        vals = [per_joint[n] for n in js.joints
                if canonical_name(n) in members and per_joint.get(n) is not None]
        out[group] = float(np.mean(vals)) if vals else None
    return out


def match_poses(preds, gts, threshold: float = PCKH_THRESHOLD):
    """Greedy one-to-one pose assignment for a single frame.

    preds/gts are PersonInstance lists in the same joint set; every gt must
    carry head_size. Returns a list of (pred_index, gt_index) pairs.
    """
    candidates = []
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gts):
            if g.head_size is None or g.head_size <= 0:
                raise PoseError("ground-truth instances need a positive head_size")
            both = p.annotated & g.annotated
            if not both.any():
                continue
            d = np.linalg.norm(p.coords[both] - g.coords[both], axis=1) / g.head_size
            count = int(np.sum(d <= threshold))
            if count > 0:
                candidates.append((-count, float(d.mean()), pi, gi))
    candidates.sort()
    used_p, used_g, matches = set(), set(), []
    for _, _, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        matches.append((pi, gi))
    return matches


def _average_precision(scored, npos: int) -> float:
    """All-point interpolated AP (in percent) from (score, is_tp) records."""
    if npos == 0:
        return None
    if not scored:
        return 0.0
    scored = sorted(scored, key=lambda r: -r[0])
    tp = np.cumsum([1 if hit else 0 for _, hit in scored])
    fp = np.cumsum([0 if hit else 1 for _, hit in scored])
    recall = tp / npos
    precision = tp / np.maximum(tp + fp, 1)
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[1.0], precision])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = float(np.sum((mrec[1:] - mrec[:-1]) * mpre[1:]))
    return 100.0 * ap


def _index_frames(frames):
    seen = {}
    for item in frames:
        if isinstance(item, GroundTruthFrame):
            frame_index, instances = item.frame_index, item.instances
        else:
            frame_index, instances = item
        if frame_index in seen:
            raise PoseError(f"duplicate frame index {frame_index}")
        seen[frame_index] = instances
    return seen


def _check_sets(frame_maps, joint_set):
    for frames in frame_maps:
        for instances in frames.values():
            for p in instances:
                if p.joint_set != joint_set:
                    raise PoseError(
                        f"instance joint set {p.joint_set!r} does not match {joint_set!r}"
                    )


def compute_map(preds, gts, joint_set: str = "posetrack",
                threshold: float = PCKH_THRESHOLD) -> EvalReport:
    """Per-joint AP over score-ranked keypoint detections.

    preds: iterable of (frame_index, [PersonInstance]) with keypoint scores.
    gts: iterable of (frame_index, [PersonInstance]) or GroundTruthFrame,
    every instance carrying head_size.
    """
    js = get_joint_set(joint_set)
    k = js.count
    pred_by_frame = _index_frames(preds)
    gt_by_frame = _index_frames(gts)
    _check_sets((pred_by_frame, gt_by_frame), joint_set)

    npos = np.zeros(k, dtype=np.int64)
    records = [[] for _ in range(k)]   # (score, is_tp) per joint

    for frame_index in sorted(set(pred_by_frame) | set(gt_by_frame)):
        frame_preds = pred_by_frame.get(frame_index, [])
        frame_gts = gt_by_frame.get(frame_index, [])
        for g in frame_gts:
            npos += g.annotated
        matches = dict(match_poses(frame_preds, frame_gts, threshold))
        for pi, p in enumerate(frame_preds):
            gi = matches.get(pi)
            g = frame_gts[gi] if gi is not None else None
            for j in range(k):
                if not p.annotated[j]:
                    continue
                hit = (
                    g is not None
                    and g.annotated[j]
                    and pckh_distance(p.coords[j], g.coords[j], g.head_size) <= threshold
                )
                records[j].append((float(p.scores[j]), hit))

    ap = {}
    for j, name in enumerate(js.joints):
        ap[name] = _average_precision(records[j], int(npos[j]))
    return EvalReport(
        joint_set=joint_set,
        ap=ap,
        map_total=_mean_defined(ap.values()),
        counts={"gt_joints": {n: int(npos[j]) for j, n in enumerate(js.joints)}},
    )


def compute_mota(preds, gts, joint_set: str = "posetrack",
                 threshold: float = PCKH_THRESHOLD) -> EvalReport:
    """Per-joint MOTA/MOTP/precision/recall for tracked predictions.

    Predictions must carry track ids; ground truth must carry person ids.
    """
    js = get_joint_set(joint_set)
    k = js.count
    pred_by_frame = _index_frames(preds)
    gt_by_frame = _index_frames(gts)
    _check_sets((pred_by_frame, gt_by_frame), joint_set)

    gt_total = np.zeros(k, dtype=np.int64)
    fn = np.zeros(k, dtype=np.int64)
    fp = np.zeros(k, dtype=np.int64)
    idsw = np.zeros(k, dtype=np.int64)
    tp = np.zeros(k, dtype=np.int64)
    dist_sum = np.zeros(k, dtype=np.float64)
    last_id = {}   # (person_id, joint) -> last matched track id

    for frame_index in sorted(set(pred_by_frame) | set(gt_by_frame)):
        frame_preds = pred_by_frame.get(frame_index, [])
        frame_gts = gt_by_frame.get(frame_index, [])
        for p in frame_preds:
            if p.track_id is None:
                raise PoseError("compute_mota needs track ids on predictions",
                                frame=frame_index)
        for g in frame_gts:
            if g.person_id is None:
                raise PoseError("compute_mota needs person ids on ground truth",
                                frame=frame_index)
        matches = dict(match_poses(frame_preds, frame_gts, threshold))
        matched_gt = {gi: pi for pi, gi in matches.items()}

        for gi, g in enumerate(frame_gts):
            pi = matched_gt.get(gi)
            p = frame_preds[pi] if pi is not None else None
            for j in range(k):
                if not g.annotated[j]:
                    continue
                gt_total[j] += 1
                ok = False
                if p is not None and p.annotated[j]:
                    d = pckh_distance(p.coords[j], g.coords[j], g.head_size)
                    ok = d <= threshold
                if ok:
                    tp[j] += 1
                    dist_sum[j] += d
                    key = (g.person_id, j)
                    prev = last_id.get(key)
                    if prev is not None and prev != p.track_id:
                        idsw[j] += 1
                    last_id[key] = p.track_id
                else:
                    fn[j] += 1

        # reported prediction joints with no gated match are false positives
        for pi, p in enumerate(frame_preds):
            gi = matches.get(pi)
            g = frame_gts[gi] if gi is not None else None
            for j in range(k):
                if not p.annotated[j]:
                    continue
                ok = (
                    g is not None
                    and g.annotated[j]
                    and pckh_distance(p.coords[j], g.coords[j], g.head_size) <= threshold
                )
                if not ok:
                    fp[j] += 1

    mota, precision, recall, motp = {}, {}, {}, {}
    for j, name in enumerate(js.joints):
        if gt_total[j] == 0:
            mota[name] = precision[name] = recall[name] = None
            continue
        mota[name] = 100.0 * (1.0 - (fn[j] + fp[j] + idsw[j]) / gt_total[j])
        denom = tp[j] + fp[j]
        precision[name] = 100.0 * tp[j] / denom if denom else 0.0
        recall[name] = 100.0 * tp[j] / gt_total[j]
        if tp[j]:
            motp[name] = 100.0 * (dist_sum[j] / tp[j]) / threshold

    return EvalReport(
        joint_set=joint_set,
        mota=mota,
        mota_total=_mean_defined(mota.values()),
        motp_total=_mean_defined(motp.values()) if motp else None,
        precision=precision,
        precision_total=_mean_defined(precision.values()),
        recall=recall,
        recall_total=_mean_defined(recall.values()),
        counts={
            "gt_joints": {n: int(gt_total[j]) for j, n in enumerate(js.joints)},
            "fn": int(fn.sum()), "fp": int(fp.sum()), "idsw": int(idsw.sum()),
            "fp_per_joint": {n: int(fp[j]) for j, n in enumerate(js.joints)},
        },
    )


def _fmt(v) -> str:
    return "  -" if v is None else f"{v:5.1f}"


def format_table(report: EvalReport, kind: str) -> str:
    """Aligned text table, one row, Head..Ankle plus the totals."""
    if kind == "map":
        groups = report.merged_ap()
        cols = list(groups.items()) + [("Total", report.map_total)]
    elif kind == "mota":
        groups = report.merged_mota()
        cols = list(groups.items()) + [
            ("Total", report.mota_total),
            ("MOTP", report.motp_total),
            ("Prec", report.precision_total),
            ("Rec", report.recall_total),
        ]
    else:
        raise PoseError(f"unknown table kind {kind!r}")
    header = " | ".join(f"{name:>8}" for name, _ in cols)
    row = " | ".join(f"{_fmt(v):>8}" for _, v in cols)
    return header + "\n" + row


def report_to_dict(report: EvalReport, kind: str) -> dict:
    """Machine-readable form of the table plus the per-joint values."""
    if kind == "map":
        return {
            "joint_set": report.joint_set,
            "per_joint_ap": report.ap,
            "groups": report.merged_ap(),
            "total_map": report.map_total,
        }
    if kind == "mota":
        return {
            "joint_set": report.joint_set,
            "per_joint_mota": report.mota,
            "groups": report.merged_mota(),
            "total_mota": report.mota_total,
            "total_motp": report.motp_total,
            "total_precision": report.precision_total,
            "total_recall": report.recall_total,
            "counts": report.counts,
        }
    raise PoseError(f"unknown report kind {kind!r}")
