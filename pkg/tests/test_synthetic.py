import numpy as np
import pytest

from posepipe import PoseError, builtin_joint_set
from posepipe.skeletons import mapping
from posepipe.synthetic import (
    DEFAULT_DOMAINS,
    DomainSpec,
    gen_synthetic,
    project_to_merged,
)


def test_same_seed_gives_identical_datasets():
    a = gen_synthetic(DEFAULT_DOMAINS["coco"], 5, seed=3)
    b = gen_synthetic(DEFAULT_DOMAINS["coco"], 5, seed=3)
    for s, t in zip(a, b):
        assert np.array_equal(s.input, t.input)
        assert np.array_equal(s.target, t.target)
        assert np.array_equal(s.keypoints, t.keypoints)
        assert np.array_equal(s.mask, t.mask)


def test_different_seed_differs():
    a = gen_synthetic(DEFAULT_DOMAINS["coco"], 3, seed=3)
    b = gen_synthetic(DEFAULT_DOMAINS["coco"], 3, seed=4)
    assert not np.array_equal(a[0].input, b[0].input)


def test_annotated_counts_per_domain():
    for name, count in (("coco", 17), ("mpii", 16), ("posetrack", 15)):
        ds = gen_synthetic(DEFAULT_DOMAINS[name], 40, seed=6)
        for s in ds:
            assert s.mask.sum() == count
            assert s.target.shape[0] == count


def test_domain_offsets_measured_across_datasets():
    # same seed -> same latent figures, so the measured mean discrepancy on
    # shared joints equals the configured offset difference exactly
    n = 1000
    a = gen_synthetic(DEFAULT_DOMAINS["coco"], n, seed=9)
    b = gen_synthetic(DEFAULT_DOMAINS["mpii"], n, seed=9)
    m = mapping("coco", "mpii")
    deltas = []
    for sa, sb in zip(a, b):
        for i, j in m.index_map:
            deltas.append(sb.keypoints[j] - sa.keypoints[i])
    mean_delta = np.mean(deltas, axis=0)
    configured = (np.asarray(DEFAULT_DOMAINS["mpii"].offset)
                  - np.asarray(DEFAULT_DOMAINS["coco"].offset))
    assert np.allclose(mean_delta, configured, atol=1e-9)
    assert np.allclose(np.max(np.abs(deltas - configured), axis=0), 0, atol=1e-9)


def test_latents_shared_across_domains():
    a = gen_synthetic(DEFAULT_DOMAINS["coco"], 10, seed=12)
    b = gen_synthetic(DEFAULT_DOMAINS["posetrack"], 10, seed=12)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.latent, sb.latent)


def test_targets_match_rendered_keypoints():
    ds = gen_synthetic(DEFAULT_DOMAINS["posetrack"], 3, seed=14)
    for s in ds:
        for j in range(s.target.shape[0]):
            py, px = np.unravel_index(np.argmax(s.target[j]), s.target[j].shape)
            assert abs(px - s.keypoints[j, 0]) <= 0.5 + 1e-9
            assert abs(py - s.keypoints[j, 1]) <= 0.5 + 1e-9
            assert s.target[j].max() <= 1.0


def test_label_noise_jitters_annotations():
    noisy = DomainSpec("posetrack", label_noise=0.8)
    clean = DomainSpec("posetrack", label_noise=0.0)
    a = gen_synthetic(noisy, 20, seed=15)
    b = gen_synthetic(clean, 20, seed=15)
    gaps = [np.linalg.norm(sa.keypoints - sb.keypoints, axis=1).mean()
            for sa, sb in zip(a, b)]
    assert np.mean(gaps) > 0.3
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.latent, sb.latent)


def test_occlusion_dims_strokes_but_keeps_annotations():
    occluded = DomainSpec("posetrack", noise=0.0, occlusion=0.6)
    clean = DomainSpec("posetrack", noise=0.0, occlusion=0.0)
    a = gen_synthetic(occluded, 20, seed=16)
    b = gen_synthetic(clean, 20, seed=16)
    assert sum(s.input.sum() for s in a) < sum(s.input.sum() for s in b)
    for s in a:
        assert s.mask.all()


def test_project_to_merged():
    merged = builtin_joint_set("merged")
    ds = gen_synthetic(DEFAULT_DOMAINS["mpii"], 2, seed=17)
    up = project_to_merged(ds[0])
    assert up.domain == "merged"
    assert up.target.shape[0] == merged.count
    assert up.mask.sum() == 16
    m = mapping("mpii", "merged")
    for i, j in m.index_map:
        assert np.array_equal(up.target[j], ds[0].target[i])
        assert np.array_equal(up.keypoints[j], ds[0].keypoints[i])
    assert project_to_merged(up) is up


def test_bad_specs_rejected():
    with pytest.raises(PoseError):
        DomainSpec("nonexistent-set")
    with pytest.raises(PoseError):
        DomainSpec("coco", noise=-1.0)
    with pytest.raises(PoseError):
        DomainSpec("coco", occlusion=1.0)
    with pytest.raises(PoseError):
        gen_synthetic(DEFAULT_DOMAINS["coco"], 0, seed=1)
