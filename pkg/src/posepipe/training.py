"""Training schedules for the multi-domain toy network.

A schedule is an ordered list of stages; each stage picks its datasets, its
trainable parameter blocks, a loss (plain masked L2 or hard-keypoint mining),
a step count and a learning rate. Plain SGD throughout, batch order drawn
from a seeded generator, so runs are bit-reproducible.

Presets:

* ``single_domain_schedule`` - train on one dataset only.
* ``multi_domain_schedule`` - joint training over all heads, no fine-tuning.
* ``transfer_schedule`` - train on a source domain, then fine-tune everything
  on the target.
* ``mixed_schedule`` - one merged-vocabulary head over pooled datasets
  (build the network with ``domains=("merged",)``).
* ``staged_schedule`` - joint training, then a full fine-tune on the primary
  domain, then a frozen-backbone fine-tune of the remaining heads on the
  remaining domains. The joint stage switches to hard-keypoint mining for
  its final sixth, and later stages keep it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import PoseError
from .skeletons import mapping
from .toynet import NetConfig, ToyNetwork, forward, gradients, init_network, sgd_step
from .synthetic import project_to_merged

DEFAULT_LR = 1.2
DEFAULT_BATCH = 8
DEFAULT_OHKM_K = 8


@dataclass(frozen=True)
class Stage:
    name: str
    domains: tuple
    trainable: tuple | str = "all"     # "all" or tuple of block names
    loss: str = "l2"
    ohkm_k: int = DEFAULT_OHKM_K
    steps: int = 100
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise PoseError("bad stage configuration")
        if self.loss not in ("l2", "ohkm"):
            raise PoseError(f"unknown loss {self.loss!r}")


@dataclass
class TrainSchedule:
    stages: list

    def __post_init__(self):
        if not self.stages:
            raise PoseError("schedule needs at least one stage")


def _split_ohkm(total_steps: int):
    ohkm_steps = round(total_steps / 6)
    return total_steps - ohkm_steps, ohkm_steps


def single_domain_schedule(domain: str, steps: int = 2000, lr: float = DEFAULT_LR,
                           batch_size: int = DEFAULT_BATCH) -> TrainSchedule:
    l2_steps, ohkm_steps = _split_ohkm(steps)
    return TrainSchedule([
        Stage(f"{domain}-l2", (domain,), "all", "l2", steps=l2_steps, lr=lr,
              batch_size=batch_size),
        Stage(f"{domain}-ohkm", (domain,), "all", "ohkm", steps=ohkm_steps, lr=lr,
              batch_size=batch_size),
    ])


def multi_domain_schedule(domains=("coco", "mpii", "posetrack"), steps: int = 2000,
                          lr: float = DEFAULT_LR,
                          batch_size: int = DEFAULT_BATCH) -> TrainSchedule:
    l2_steps, ohkm_steps = _split_ohkm(steps)
    return TrainSchedule([
        Stage("joint-l2", tuple(domains), "all", "l2", steps=l2_steps, lr=lr,
              batch_size=batch_size),
        Stage("joint-ohkm", tuple(domains), "all", "ohkm", steps=ohkm_steps, lr=lr,
              batch_size=batch_size),
    ])


def transfer_schedule(source: str, target: str, steps=(2000, 400),
                      lr: float = DEFAULT_LR,
                      batch_size: int = DEFAULT_BATCH) -> TrainSchedule:
    l2_steps, ohkm_steps = _split_ohkm(steps[0])
    return TrainSchedule([
        Stage(f"{source}-l2", (source,), "all", "l2", steps=l2_steps, lr=lr,
              batch_size=batch_size),
        Stage(f"{source}-ohkm", (source,), "all", "ohkm", steps=ohkm_steps, lr=lr,
              batch_size=batch_size),
        Stage(f"finetune-{target}", (target,), "all", "ohkm", steps=steps[1], lr=lr,
              batch_size=batch_size),
    ])


def mixed_schedule(domains=("coco", "mpii", "posetrack"), steps: int = 2000,
                   lr: float = DEFAULT_LR,
                   batch_size: int = DEFAULT_BATCH) -> TrainSchedule:
    l2_steps, ohkm_steps = _split_ohkm(steps)
    return TrainSchedule([
        Stage("mixed-l2", tuple(domains), "all", "l2", steps=l2_steps, lr=lr,
              batch_size=batch_size),
        Stage("mixed-ohkm", tuple(domains), "all", "ohkm", steps=ohkm_steps, lr=lr,
              batch_size=batch_size),
    ])


def staged_schedule(domains=("coco", "mpii", "posetrack"), primary: str = "coco",
                  steps=(2000, 300, 400), lr: float = DEFAULT_LR,
                  batch_size: int = DEFAULT_BATCH) -> TrainSchedule:
    if primary not in domains:
        raise PoseError(f"primary domain {primary!r} not in {domains}")
    others = tuple(d for d in domains if d != primary)
    l2_steps, ohkm_steps = _split_ohkm(steps[0])
    return TrainSchedule([
        Stage("joint-l2", tuple(domains), "all", "l2", steps=l2_steps, lr=lr,
              batch_size=batch_size),
        Stage("joint-ohkm", tuple(domains), "all", "ohkm", steps=ohkm_steps, lr=lr,
              batch_size=batch_size),
        Stage(f"finetune-{primary}", (primary,), "all", "ohkm", steps=steps[1],
              lr=lr, batch_size=batch_size),
        Stage("finetune-heads", others, tuple(f"head.{d}" for d in others),
              "ohkm", steps=steps[2], lr=lr, batch_size=batch_size),
    ])


def _grid_argmax_decode(channels: np.ndarray) -> np.ndarray:
    """(K, H, W) -> (K, 2) grid xy via argmax plus quarter offsets."""
    k, h, w = channels.shape
    flat = channels.reshape(k, -1).argmax(axis=1)
    py, px = np.divmod(flat, w)
    out = np.stack([px, py], axis=1).astype(np.float64)
    for i in range(k):
        x, y = int(px[i]), int(py[i])
        if 0 < x < w - 1 and 0 < y < h - 1:
            c = channels[i]
            if c[y, x + 1] > c[y, x - 1]:
                out[i, 0] += 0.25
            elif c[y, x - 1] > c[y, x + 1]:
                out[i, 0] -= 0.25
            if c[y + 1, x] > c[y - 1, x]:
                out[i, 1] += 0.25
            elif c[y - 1, x] > c[y + 1, x]:
                out[i, 1] -= 0.25
    return out


def heldout_error(net: ToyNetwork, samples, reference: str = "annotation") -> float:
    """Mean keypoint localization error (grid cells) over annotated joints.

    reference "annotation" scores against the domain's own (possibly biased)
    labels; "truth" scores against the underlying figure, which the synthetic
    world knows exactly. The multi-domain benchmark uses "truth" so that a
    domain's systematic annotation offset counts against models that learned
    to reproduce it.
    """
    if not samples:
        raise PoseError("no held-out samples")
    if reference not in ("annotation", "truth"):
        raise PoseError(f"unknown reference {reference!r}")
    errs = []
    merged_only = tuple(net.config.domains) == ("merged",)
    for s in samples:
        if merged_only:
            s = project_to_merged(s)
        if reference == "truth":
            target = np.zeros_like(s.keypoints)
            for mi, di in mapping("merged", s.domain).index_map:
                target[di] = s.latent[mi]
        else:
            target = s.keypoints
        outputs, _ = forward(net, np.asarray(s.input, dtype=np.float64),
                             domains=(s.domain,))
        decoded = _grid_argmax_decode(outputs[s.domain])
        if s.mask.any():
            d = np.linalg.norm(decoded[s.mask] - target[s.mask], axis=1)
            errs.append(d.mean())
    return float(np.mean(errs))


def train(schedule: TrainSchedule, datasets: dict, seed: int,
          config: NetConfig = None, heldout: dict = None,
          net: ToyNetwork = None, log_path=None, eval_every: int = 0,
          heldout_reference: str = "annotation"):
    """Run the schedule with SGD; bit-reproducible for a given seed.

    datasets/heldout map domain name -> list of Samples. Returns
    (network, log) where log is a list of dicts; each stage boundary logs the
    per-domain held-out error when held-out data is provided.
    """
    if config is None:
        config = NetConfig()
    if net is None:
        net = init_network(config, seed)
    merged_only = tuple(net.config.domains) == ("merged",)
    heldout = heldout or {}
    log = []

    def emit(entry):
        log.append(entry)
        if log_path is not None:
            with open(log_path, "a") as f:
                f.write(json.dumps(entry) + "\n")

    def evaluate(stage_index, stage, step):
        entry = {"stage": stage_index, "name": stage.name, "step": step}
        if heldout:
            entry["heldout"] = {d: heldout_error(net, ss, heldout_reference)
                                for d, ss in sorted(heldout.items())}
        emit(entry)

    for stage_index, stage in enumerate(schedule.stages):
        missing = [d for d in stage.domains if d not in datasets]
        if missing:
            raise PoseError(f"stage {stage.name!r} needs missing datasets {missing}")
        pools = []
        for d in stage.domains:
            pool = [project_to_merged(s) if merged_only else s for s in datasets[d]]
            if not pool:
                raise PoseError(f"stage {stage.name!r} has an empty dataset {d!r}")
            pools.append(pool)
        if stage.trainable == "all":
            net.set_frozen(())
        else:
            net.set_frozen(set(net.blocks()) - set(stage.trainable))
        rng = np.random.default_rng([seed, 101, stage_index])
        for step in range(stage.steps):
            # batches balance domains: slot -> uniform domain -> uniform sample
            doms = rng.integers(0, len(pools), size=stage.batch_size)
            batch = [pools[d][rng.integers(0, len(pools[d]))] for d in doms]
            grads, _ = gradients(net, batch, stage.loss, stage.ohkm_k)
            sgd_step(net, grads, stage.lr)
            if eval_every and (step + 1) % eval_every == 0 and step + 1 < stage.steps:
                evaluate(stage_index, stage, step + 1)
        evaluate(stage_index, stage, stage.steps)
    return net, log
