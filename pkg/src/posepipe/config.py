"""Pipeline configuration: one flat record of every knob, JSON-loadable.

Defaults bake in the standard operating point: Gaussian targets at sigma 9,
1-cell smoothing before decode, quarter offsets on, box re-scoring on,
box/keypoint thresholds 0.4/0.3, OKS-NMS at 0.4, detector box merging at IoU
0.6, Hungarian matching with the constant-velocity propagator, an 8-frame
lookback and 2-frame track pruning. Each post-processing and tracking stage
has its own boolean switch so any single stage can be ablated.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import PoseError


@dataclass
class PipelineConfig:
    # fusion / decode
    target_joint_set: str = "posetrack"
    fusion: str = "head-swap:coco,mpii"   # select:<b> | head-swap:<body>,<head> | vote
    render_sigma: float = 9.0
    smooth_sigma: float = 1.0
    use_gaussian_filter: bool = True
    use_quarter_offset: bool = True

    # scoring / suppression
    use_box_rescore: bool = True
    use_box_threshold: bool = True
    box_threshold: float = 0.4
    use_keypoint_threshold: bool = True
    keypoint_threshold: float = 0.3
    use_oks_nms: bool = True
    oks_nms_threshold: float = 0.4
    box_merge_iou_threshold: float = 0.6
    oks_falloff_overrides: dict = field(default_factory=dict)
    oks_extra_falloff: float = 0.079

    # tracking
    use_tracking: bool = True
    matcher: str = "hungarian"
    use_flow_track: bool = True        # velocity propagation; off = identity
    similarity_threshold: float = 0.3
    lookback: int = 8
    use_tracklet_pruning: bool = True
    min_track_length: int = 2

    # fusion head interpolation coefficients (midpoint->nose axis)
    head_bottom_coef: float = 0.5
    head_top_coef: float = 1.0

    # evaluation
    pckh_threshold: float = 0.5
    head_size_factor: float = 0.6

    # toy training
    ohkm_k: int = 8

    def __post_init__(self):
        if self.matcher not in ("hungarian", "greedy"):
            raise PoseError(f"unknown matcher {self.matcher!r}")
        kind = self.fusion.split(":", 1)[0]
        if kind not in ("select", "head-swap", "vote"):
            raise PoseError(f"unknown fusion strategy {self.fusion!r}")

    @property
    def propagator(self) -> str:
        return "velocity" if self.use_flow_track else "identity"

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise PoseError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise PoseError(f"config is not valid JSON: {exc}", path=path) from exc
        if not isinstance(doc, dict):
            raise PoseError("config must be a JSON object", path=path)
        try:
            return cls.from_dict(doc)
        except PoseError:
            raise
        except (TypeError, ValueError) as exc:
            raise PoseError(f"bad config: {exc}", path=path) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
