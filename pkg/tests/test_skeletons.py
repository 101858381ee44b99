import numpy as np
import pytest

from posepipe import PoseError, builtin_joint_set, mapping, project
from posepipe.instances import PersonInstance
from posepipe.skeletons import JointSet, canonical_name, get_joint_set, register_joint_set

# Official keypoint vocabularies of the three datasets, written out in full
# so the counts below are independent of the library's tables.
COCO_OFFICIAL = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]
MPII_OFFICIAL = [
    "right_ankle", "right_knee", "right_hip", "left_hip", "left_knee",
    "left_ankle", "pelvis", "thorax", "upper_neck", "head_top",
    "right_wrist", "right_elbow", "right_shoulder", "left_shoulder",
    "left_elbow", "left_wrist",
]
POSETRACK_OFFICIAL = [
    "nose", "head_bottom", "head_top",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]


def test_builtin_counts():
    assert builtin_joint_set("merged").count == 21
    assert builtin_joint_set("coco").count == len(COCO_OFFICIAL) == 17
    assert builtin_joint_set("mpii").count == len(MPII_OFFICIAL) == 16
    assert builtin_joint_set("posetrack").count == len(POSETRACK_OFFICIAL) == 15


def test_builtin_vocabularies_match_official_lists():
    assert set(builtin_joint_set("coco").joints) == set(COCO_OFFICIAL)
    assert set(builtin_joint_set("mpii").joints) == set(MPII_OFFICIAL)
    assert set(builtin_joint_set("posetrack").joints) == set(POSETRACK_OFFICIAL)


def test_merged_is_union_of_datasets():
    union = {canonical_name(j)
             for j in COCO_OFFICIAL + MPII_OFFICIAL + POSETRACK_OFFICIAL}
    merged = {canonical_name(j) for j in builtin_joint_set("merged").joints}
    assert merged == union


def test_flip_pairs_are_left_right_of_same_joint():
    for name in ("merged", "coco", "mpii", "posetrack"):
        js = builtin_joint_set(name)
        assert js.flip_pairs, name
        for a, b in js.flip_pairs:
            left, right = js.joints[a], js.joints[b]
            assert left.startswith("left_")
            assert right == "right_" + left[len("left_"):]


def test_unknown_builtin_name():
    with pytest.raises(PoseError):
        builtin_joint_set("smpl")


def test_mapping_sizes():
    assert len(mapping("coco", "merged")) == 17
    # independent count: joints shared by name between the two official lists
    shared = {canonical_name(j) for j in COCO_OFFICIAL} & \
             {canonical_name(j) for j in MPII_OFFICIAL}
    assert len(mapping("coco", "mpii")) == len(shared) == 12
    assert len(mapping("posetrack", "merged")) == 15
    assert len(mapping("mpii", "merged")) == 16


def test_mapping_identity():
    for name in ("merged", "coco", "mpii", "posetrack"):
        m = mapping(name, name)
        assert m.index_map == tuple((i, i) for i in range(builtin_joint_set(name).count))


def test_mapping_matches_name_equality():
    names = ("merged", "coco", "mpii", "posetrack")
    for a in names:
        for b in names:
            m = dict(mapping(a, b).index_map)
            ja, jb = builtin_joint_set(a), builtin_joint_set(b)
            for i, joint in enumerate(ja.joints):
                expect = None
                for j, other in enumerate(jb.joints):
                    if canonical_name(joint) == canonical_name(other):
                        expect = j
                assert m.get(i) == expect


def test_head_bottom_aliases_upper_neck():
    m = dict(mapping("posetrack", "mpii").index_map)
    pt = builtin_joint_set("posetrack")
    mp = builtin_joint_set("mpii")
    assert mp.joints[m[pt.joints.index("head_bottom")]] == "upper_neck"


def test_joint_set_json_round_trip():
    js = builtin_joint_set("posetrack")
    again = JointSet.from_json(js.to_json())
    assert again == js


def test_register_custom_set():
    custom = JointSet("hands3", ("left_hand", "right_hand", "nose"),
                      flip_pairs=((0, 1),))
    register_joint_set(custom)
    assert get_joint_set("hands3") is custom
    with pytest.raises(PoseError):
        register_joint_set(JointSet("coco", ("a", "b")))


def test_joint_set_validation():
    with pytest.raises(PoseError):
        JointSet("bad", ("a", "a"))
    with pytest.raises(PoseError):
        JointSet("bad", ("a", "b"), flip_pairs=((0, 0),))
    with pytest.raises(PoseError):
        JointSet("bad", ("a", "b"), flip_pairs=((0, 1), (1, 0)))


def _instance(joint_set, seed=0):
    js = builtin_joint_set(joint_set)
    rng = np.random.default_rng(seed)
    return PersonInstance(
        box=[0, 0, 10, 20],
        box_score=0.9,
        coords=rng.uniform(0, 10, (js.count, 2)),
        scores=rng.uniform(0.1, 1.0, js.count),
        annotated=np.ones(js.count, dtype=bool),
        joint_set=joint_set,
    )


def test_project_round_trip_on_coco_joints():
    p = _instance("coco")
    up = project(p, mapping("coco", "merged"))
    back = project(up, mapping("merged", "coco"))
    assert np.array_equal(back.coords, p.coords)
    assert np.array_equal(back.scores, p.scores)
    assert np.array_equal(back.annotated, p.annotated)


def test_project_mpii_to_merged_leaves_face_unannotated():
    p = _instance("mpii")
    up = project(p, mapping("mpii", "merged"))
    merged = builtin_joint_set("merged")
    face = {"nose", "left_eye", "right_eye", "left_ear", "right_ear"}
    for i, name in enumerate(merged.joints):
        assert up.annotated[i] == (name not in face)


def test_project_preserves_coordinates_and_scores():
    p = _instance("posetrack")
    up = project(p, mapping("posetrack", "merged"))
    for i, j in mapping("posetrack", "merged").index_map:
        assert np.array_equal(up.coords[j], p.coords[i])
        assert up.scores[j] == p.scores[i]


def test_project_all_unannotated_stays_unannotated():
    p = _instance("coco")
    p.annotated[:] = False
    up = project(p, mapping("coco", "merged"))
    assert not up.annotated.any()


def test_project_set_mismatch():
    p = _instance("coco")
    with pytest.raises(PoseError):
        project(p, mapping("mpii", "merged"))
