"""Combining per-domain head outputs for one crop into a final pose.

Three strategies cover the single-branch, head-swap, and heatmap-voting
predictions; heads missing from a single branch can be synthesized from the
nose/shoulder geometry with :func:`interpolate_head`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoseError
from .heatmaps import DecodedPose, Heatmap, decode
from .skeletons import canonical_name, get_joint_set, mapping

# Head-segment interpolation coefficients along the shoulder-midpoint -> nose
# axis (neck sits halfway up, the crown a full unit beyond the nose).
HEAD_BOTTOM_COEF = 0.5
HEAD_TOP_COEF = 1.0

_HEAD_JOINTS = ("head_top", "upper_neck")   # canonical names


@dataclass
class BranchOutputs:
    """Per-domain heatmaps for one crop; identical geometry across branches."""

    branches: dict   # joint-set name -> Heatmap

    def __post_init__(self):
        if not self.branches:
            raise PoseError("at least one branch required")
        geos = set()
        for name, h in self.branches.items():
            if h.joint_set != name:
                raise PoseError(
                    f"branch {name!r} holds a heatmap tagged {h.joint_set!r}"
                )
            geos.add((h.values.shape[1:], h.crop, h.strides))
        if len(geos) != 1:
            raise PoseError("branch geometries differ")

    def __contains__(self, name):
        return name in self.branches

    def __getitem__(self, name) -> Heatmap:
        try:
            return self.branches[name]
        except KeyError:
            raise PoseError(f"branch {name!r} not present") from None

    @property
    def geometry(self):
        h = next(iter(self.branches.values()))
        return h.values.shape[1:], h.crop, h.strides


def interpolate_head(pose: DecodedPose, bottom_coef: float = HEAD_BOTTOM_COEF,
                     top_coef: float = HEAD_TOP_COEF):
    """(head_top, head_bottom) interpolated from nose and shoulders.

    head_bottom sits bottom_coef of the way from the shoulder midpoint to the
    nose, head_top a top_coef multiple of that vector beyond the nose; both
    carry the mean score of the three contributing joints. Returns
    (xy, score, ok) per joint with ok False when nose or a shoulder is
    missing.
    """
    js = get_joint_set(pose.joint_set)
    try:
        ni = js.index("nose")
        li = js.index("left_shoulder")
        ri = js.index("right_shoulder")
    except PoseError:
        return ((np.zeros(2), 0.0, False), (np.zeros(2), 0.0, False))
    if not (pose.annotated[ni] and pose.annotated[li] and pose.annotated[ri]):
        return ((np.zeros(2), 0.0, False), (np.zeros(2), 0.0, False))
    nose = pose.coords[ni]
    mid = (pose.coords[li] + pose.coords[ri]) / 2.0
    axis = nose - mid
    score = float((pose.scores[ni] + pose.scores[li] + pose.scores[ri]) / 3.0)
    head_top = nose + top_coef * axis
    head_bottom = mid + bottom_coef * axis
    return ((head_top, score, True), (head_bottom, score, True))


def _project_pose(pose: DecodedPose, target_set: str) -> DecodedPose:
    m = mapping(pose.joint_set, target_set)
    k = get_joint_set(target_set).count
    coords = np.zeros((k, 2), dtype=np.float64)
    scores = np.zeros(k, dtype=np.float64)
    annotated = np.zeros(k, dtype=bool)
    for i, j in m.index_map:
        coords[j] = pose.coords[i]
        scores[j] = pose.scores[i]
        annotated[j] = pose.annotated[i]
    return DecodedPose(target_set, coords, scores, annotated)


def _fill_head(pose: DecodedPose, source: DecodedPose,
               head_coefs=(HEAD_BOTTOM_COEF, HEAD_TOP_COEF)) -> DecodedPose:
    """Fill missing head_top/head_bottom of ``pose`` by interpolation on ``source``."""
    js = get_joint_set(pose.joint_set)
    slots = {}
    for i, name in enumerate(js.joints):
        if canonical_name(name) in _HEAD_JOINTS and not pose.annotated[i]:
            slots[canonical_name(name)] = i
    if not slots:
        return pose
    (top_xy, top_s, top_ok), (bot_xy, bot_s, bot_ok) = \
        interpolate_head(source, head_coefs[0], head_coefs[1])
    for name, i in slots.items():
        if name == "head_top" and top_ok:
            pose.coords[i] = top_xy
            pose.scores[i] = top_s
            pose.annotated[i] = True
        elif name == "upper_neck" and bot_ok:
            pose.coords[i] = bot_xy
            pose.scores[i] = bot_s
            pose.annotated[i] = True
    return pose


def fuse_select(b: BranchOutputs, branch: str, target_set: str,
                smooth_sigma: float = 1.0, use_quarter_offset: bool = True,
                head_coefs=(HEAD_BOTTOM_COEF, HEAD_TOP_COEF)) -> DecodedPose:
    """Decode one branch and project it onto the target set; head joints the
    branch cannot supply are interpolated from its nose/shoulders."""
    decoded = decode(b[branch], smooth_sigma, use_quarter_offset)
    out = _project_pose(decoded, target_set)
    return _fill_head(out, decoded, head_coefs)


def fuse_head_swap(b: BranchOutputs, body_branch: str, head_branch: str,
                   target_set: str, smooth_sigma: float = 1.0,
                   use_quarter_offset: bool = True) -> DecodedPose:
    """Body joints from one branch, head_top/head_bottom from another."""
    head_js = get_joint_set(b[head_branch].joint_set)
    head_names = [n for n in head_js.joints if canonical_name(n) in _HEAD_JOINTS]
    if not head_names:
        raise PoseError(f"head branch {head_branch!r} provides no head joints")

    body = decode(b[body_branch], smooth_sigma, use_quarter_offset)
    head = decode(b[head_branch], smooth_sigma, use_quarter_offset)
    out = _project_pose(body, target_set)

    target_js = get_joint_set(target_set)
    for i, name in enumerate(target_js.joints):
        cname = canonical_name(name)
        if cname not in _HEAD_JOINTS:
            continue
        try:
            j = head_js.index(cname)
        except PoseError:
            continue
        out.coords[i] = head.coords[j]
        out.scores[i] = head.scores[j]
        out.annotated[i] = head.annotated[j]
    return out


def fuse_vote(b: BranchOutputs, target_set: str, smooth_sigma: float = 1.0,
              use_quarter_offset: bool = True) -> DecodedPose:
    """Average each target joint's channel over every branch that has it,
    then decode the averaged map. Joints present in no branch decode
    not-annotated."""
    (height, width), crop, strides = b.geometry
    target_js = get_joint_set(target_set)
    k = target_js.count
    votes = np.zeros((k, height, width), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for name in sorted(b.branches):
        h = b.branches[name]
        m = mapping(name, target_set)
        for i, j in m.index_map:
            votes[j] += h.values[i].astype(np.float64)
            counts[j] += 1
    nonzero = counts > 0
    votes[nonzero] /= counts[nonzero, None, None]
    avg = Heatmap(votes.astype(np.float32), target_set, crop, strides)
    return decode(avg, smooth_sigma, use_quarter_offset)
