"""Trajectory-span scoring and clip filtering.

Two of the four curation stages are implemented here (length and span); the
caption-based dynamics check and the reconstruction-quality check enter through
an optional external predicate.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InsufficientFramesError
from .geometry import Trajectory, rotation_geodesic

LENGTH = "LENGTH"
SPAN = "SPAN"
EXTERNAL = "EXTERNAL"


@dataclass
class ClipRecord:
    id: str
    trajectory: Trajectory
    frame_count: int | None = None

    def __post_init__(self):
        if self.frame_count is None:
            self.frame_count = len(self.trajectory)
        if self.frame_count != len(self.trajectory):
            raise ValueError(
                f"clip {self.id}: frame_count {self.frame_count} != trajectory length "
                f"{len(self.trajectory)}"
            )


@dataclass
class CurationConfig:
    min_frames_a: int = 98
    min_frames_b: int = 49
    gamma: float = 1.0
    span_threshold: float = 0.0
    span_mode: str = "keep-above"
    # Which length threshold applies to clips fed to curate(): "a" or "b".
    length_set: str = "a"

    def __post_init__(self):
        if self.min_frames_a < 1 or self.min_frames_b < 1:
            raise ConfigError("min_frames must be >= 1")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.span_mode not in ("keep-above", "keep-below"):
            raise ConfigError(f"span_mode must be keep-above or keep-below, not {self.span_mode!r}")
        if self.length_set not in ("a", "b"):
            raise ConfigError("length_set must be 'a' or 'b'")

    @property
    def min_frames(self) -> int:
        return self.min_frames_a if self.length_set == "a" else self.min_frames_b


@dataclass
class CurationReport:
    kept: list = field(default_factory=list)
    dropped: list = field(default_factory=list)  # (id, reason)
    scores: dict = field(default_factory=dict)
    histogram: dict = field(default_factory=dict)

    @property
    def reason_counts(self) -> Counter:
        return Counter(reason for _, reason in self.dropped)

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "dropped": [{"id": i, "reason": r} for i, r in self.dropped],
            "scores": self.scores,
            "histogram": self.histogram,
        }


def trajectory_span_score(traj: Trajectory, gamma: float = 1.0) -> float:
    """Summed camera-center displacement plus ``gamma`` times summed geodesic rotation.

    Camera centers are used (not raw extrinsic translations) so the score does not
    depend on the choice of world frame.
    """
    if len(traj) < 2:
        raise InsufficientFramesError("span score needs at least two poses")
    centers = np.stack([p.center for p in traj.poses])
    trans = float(np.linalg.norm(np.diff(centers, axis=0), axis=1).sum())
    rot = sum(rotation_geodesic(a.R, b.R) for a, b in zip(traj.poses[:-1], traj.poses[1:]))
    return trans + gamma * rot


def filter_length(clip: ClipRecord, min_frames: int) -> bool:
    return clip.frame_count >= min_frames


def _span_keeps(score: float, config: CurationConfig) -> bool:
    if config.span_mode == "keep-above":
        return score > config.span_threshold
    return score < config.span_threshold


def filter_span(clip: ClipRecord, config: CurationConfig) -> bool:
    return _span_keeps(trajectory_span_score(clip.trajectory, config.gamma), config)


def curate(
    clips,
    config: CurationConfig,
    extra: Callable[[ClipRecord], bool] | None = None,
    bins: int = 10,
) -> CurationReport:
    """Apply length, then external, then span filters; first failing stage names the reason.

    Clips with fewer than two poses cannot be span-scored and are dropped as LENGTH.
    The histogram covers the span scores of every scoreable clip.
    """
    report = CurationReport()
    for clip in clips:
        score = trajectory_span_score(clip.trajectory, config.gamma) if len(clip.trajectory) >= 2 else None
        if score is not None:
            report.scores[clip.id] = score
        if not filter_length(clip, config.min_frames) or score is None:
            report.dropped.append((clip.id, LENGTH))
        elif extra is not None and not extra(clip):
            report.dropped.append((clip.id, EXTERNAL))
        elif not _span_keeps(score, config):
            report.dropped.append((clip.id, SPAN))
        else:
            report.kept.append(clip.id)
    if report.scores:
        counts, edges = np.histogram(list(report.scores.values()), bins=bins)
        report.histogram = {"counts": counts.tolist(), "edges": edges.tolist()}
    return report
