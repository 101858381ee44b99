"""Synthetic multi-person sequences at pipeline scale.

Generates everything the end-to-end pipeline consumes for one sequence:
per-instance branch heatmap files (optionally with flipped-input variants),
the input manifest, and a ground-truth pose file. Figures translate with
constant velocity across frames. The scene deliberately contains the
failure cases the post-processing stages exist for:

* per-person "weak" joints on some frames: dim, displaced peaks whose decoded
  score falls below the keypoint threshold (and which land wrong if kept);
* one-frame clutter detections with healthy scores (tracking-time pruning is
  what removes them);
* low-scored clutter that the box threshold removes.

Everything is deterministic in the seed.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import PoseError
from .heatmaps import Heatmap, render_target, save_heatmap
from .instances import PersonInstance
from .poseio import PoseSequence, save_pose_file
from .skeletons import builtin_joint_set, get_joint_set, mapping
from .synthetic import figure_points

_MERGED = builtin_joint_set("merged")
BRANCHES = ("coco", "mpii", "posetrack")

# joints whose channel goes weak on designated frames (merged-set names)
_WEAK_JOINTS = ("left_wrist", "right_ankle")


def _head_size(points_by_name) -> float:
    top = points_by_name["head_top"]
    neck = points_by_name["upper_neck"]
    h = float(np.linalg.norm(top - neck))
    return 0.6 * float(np.hypot(h, 0.75 * h))


def _person_track(rng, img_w, img_h, num_frames):
    """Image-space merged-joint positions per frame for one moving figure."""
    base = figure_points(rng, 24, 18)            # in a virtual 18x24 grid
    center = base.mean(axis=0)
    scale = rng.uniform(3.6, 4.4)
    pts = (base - center) * scale
    margin = 80.0
    start = np.array([rng.uniform(margin, img_w - margin),
                      rng.uniform(margin, img_h - margin)])
    vel = rng.uniform(-5.0, 5.0, size=2)
    return [pts + start + vel * t for t in range(num_frames)]


def _crop_for(points, pad: float, grid):
    gh, gw = grid
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    size = hi - lo
    x0 = lo[0] - pad * size[0]
    y0 = lo[1] - pad * size[1]
    w = size[0] * (1 + 2 * pad)
    h = size[1] * (1 + 2 * pad)
    return (float(x0), float(y0), float(w), float(h)), (w / gw, h / gh)


def _mirror_output(h: Heatmap) -> Heatmap:
    """The prediction a perfect network would emit for the mirrored input:
    constructed as a right-inverse of the un-mirroring transform (exact away
    from the left border column)."""
    flip_pairs = get_joint_set(h.joint_set).flip_pairs
    v = h.values.copy()
    swapped = v.copy()
    for a, b in flip_pairs:
        swapped[a] = v[b]
        swapped[b] = v[a]
    shifted = swapped.copy()
    shifted[:, :, :-1] = swapped[:, :, 1:]
    return Heatmap(shifted[:, :, ::-1].copy(), h.joint_set, h.crop, h.strides)


def _render_instance(points_img, crop, strides, grid, sigma, joint_set,
                     weak: dict, noise_rng, branch_noise):
    """One branch heatmap for one person crop; weak maps joint index ->
    (displacement xy in cells, peak gain)."""
    gh, gw = grid
    m = mapping("merged", joint_set)
    k = get_joint_set(joint_set).count
    grid_pts = np.zeros((k, 2))
    for mi, di in m.index_map:
        gx = (points_img[mi][0] - crop[0]) / strides[0] - 0.5
        gy = (points_img[mi][1] - crop[1]) / strides[1] - 0.5
        grid_pts[di] = (gx, gy)
    gains = np.ones(k)
    for di, (disp, gain) in weak.items():
        grid_pts[di] = grid_pts[di] + disp
        gains[di] = gain
    hm, _ = render_target(grid_pts, sigma, grid, joint_set=joint_set,
                          crop=crop, strides=strides)
    values = hm.values * gains[:, None, None].astype(np.float32)
    if branch_noise > 0:
        values = values + branch_noise * noise_rng.standard_normal(values.shape)
    values = np.clip(values, 0.0, 1.0)
    return Heatmap(values.astype(np.float32), joint_set, crop, strides)


def _clutter_heatmap(noise_rng, crop, strides, grid, joint_set, peak):
    gh, gw = grid
    k = get_joint_set(joint_set).count
    pts = np.column_stack([noise_rng.uniform(2, gw - 3, size=k),
                           noise_rng.uniform(2, gh - 3, size=k)])
    hm, _ = render_target(pts, 1.5, grid, joint_set=joint_set,
                          crop=crop, strides=strides)
    return Heatmap((hm.values * peak).astype(np.float32), joint_set, crop, strides)


def generate_scene(outdir, num_frames: int = 5, num_persons: int = 2, seed: int = 0,
                   grid=(24, 18), sigma: float = 2.5, branch_noise: float = 0.002,
                   img_size=(640, 480), with_flipped: bool = True,
                   with_weak_joints: bool = True, with_clutter: bool = True):
    """Write heatmaps/, manifest.json and gt.json under outdir.

    Returns (manifest_path, gt_path).
    """
    if num_frames < 1 or num_persons < 1:
        raise PoseError("scene needs at least one frame and one person")
    img_w, img_h = img_size
    os.makedirs(os.path.join(outdir, "heatmaps"), exist_ok=True)

    weak_idx = [_MERGED.index(n) for n in _WEAK_JOINTS]
    tracks = [_person_track(np.random.default_rng([seed, 21, p]), img_w, img_h,
                            num_frames)
              for p in range(num_persons)]

    manifest_frames = []
    gt_frames = []
    posetrack = builtin_joint_set("posetrack")
    to_pt = mapping("merged", "posetrack")

    for t in range(num_frames):
        entries = []
        gt_instances = []
        for p in range(num_persons):
            pts = tracks[p][t]
            by_name = {n: pts[i] for i, n in enumerate(_MERGED.joints)}
            crop, strides = _crop_for(pts, 0.18, grid)

            weak = {}
            if with_weak_joints and (t + p) % 2 == 1:
                rng_weak = np.random.default_rng([seed, 31, t, p])
                for mi in weak_idx:
                    disp = rng_weak.uniform(3.0, 5.0, size=2) * rng_weak.choice([-1, 1], 2)
                    weak[mi] = (disp, 0.2)

            entry = {"box": [crop[0], crop[1], crop[2], crop[3]],
                     "box_score": 0.93, "heatmaps": {}}
            if with_flipped:
                entry["flipped_heatmaps"] = {}
            for branch in BRANCHES:
                noise_rng = np.random.default_rng([seed, 41, t, p, BRANCHES.index(branch)])
                bweak = {}
                bm = dict(mapping("merged", branch).index_map)
                for mi, wk in weak.items():
                    if mi in bm:
                        bweak[bm[mi]] = wk
                hm = _render_instance(pts, crop, strides, grid, sigma, branch,
                                      bweak, noise_rng, branch_noise)
                name = f"heatmaps/f{t}_p{p}_{branch}.pkhm"
                save_heatmap(hm, os.path.join(outdir, name))
                entry["heatmaps"][branch] = name
                if with_flipped:
                    flipped = _mirror_output(hm)
                    fname = f"heatmaps/f{t}_p{p}_{branch}_flip.pkhm"
                    save_heatmap(flipped, os.path.join(outdir, fname))
                    entry["flipped_heatmaps"][branch] = fname
            entries.append(entry)

            k = posetrack.count
            coords = np.zeros((k, 2))
            for mi, di in to_pt.index_map:
                coords[di] = pts[mi]
            gt_instances.append(PersonInstance(
                box=np.array([crop[0], crop[1], crop[2], crop[3]]),
                box_score=1.0,
                coords=coords,
                scores=np.ones(k),
                annotated=np.ones(k, dtype=bool),
                joint_set="posetrack",
                person_id=p,
                head_size=_head_size(by_name),
            ))

        if with_clutter:
            mid = num_frames // 2
            # clutter "a": one healthy-looking spurious detection on a single
            # frame (track-let pruning is what removes it); clutter "b": a
            # low-scored detection on two consecutive frames (the box
            # threshold is what removes it).
            spurious = []
            if t == mid:
                spurious.append(("a", 0.85, 0.85, 0))
                spurious.append(("b", 0.5, 0.6, 0))
            elif t == mid + 1:
                spurious.append(("b", 0.5, 0.6, 1))
            for tag, box_score, peak, step in spurious:
                rng_cl = np.random.default_rng([seed, 51, ord(tag)])
                cx = rng_cl.uniform(40, img_w - 120) + 4.0 * step
                cy = rng_cl.uniform(40, img_h - 160)
                crop = (cx, cy, 70.0, 110.0)
                strides = (crop[2] / grid[1], crop[3] / grid[0])
                entry = {"box": list(crop), "box_score": box_score, "heatmaps": {}}
                if with_flipped:
                    entry["flipped_heatmaps"] = {}
                for branch in BRANCHES:
                    hm = _clutter_heatmap(np.random.default_rng([seed, 52, ord(tag)]),
                                          crop, strides, grid, branch, peak)
                    name = f"heatmaps/f{t}_clutter{tag}_{branch}.pkhm"
                    save_heatmap(hm, os.path.join(outdir, name))
                    entry["heatmaps"][branch] = name
                    if with_flipped:
                        fname = f"heatmaps/f{t}_clutter{tag}_{branch}_flip.pkhm"
                        save_heatmap(_mirror_output(hm), os.path.join(outdir, fname))
                        entry["flipped_heatmaps"][branch] = fname
                entries.append(entry)

        manifest_frames.append({"frame_index": t, "instances": entries})
        gt_frames.append((t, gt_instances))

    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump({"frames": manifest_frames}, f, indent=2)
        f.write("\n")
    gt_path = os.path.join(outdir, "gt.json")
    save_pose_file(PoseSequence("posetrack", gt_frames), gt_path)
    return manifest_path, gt_path
