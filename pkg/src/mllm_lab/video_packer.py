"""Frame sampling and temporal packaging for video inputs.

Frames are sampled uniformly (interval midpoints) at the native rate
capped by a maximum frame rate and a hard frame budget, then grouped
into packages of adjacent frames for joint compression. Training-time
augmentation randomizes the package size and the frame rate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import InputError

MAX_AUGMENT_PACKAGE_SIZE = 6


@dataclass(frozen=True)
class FrameSamplingSpec:
    duration_s: float
    native_fps: float
    max_frames: int = 1080
    max_fps: float = 10.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InputError("video duration must be positive")
        if self.native_fps <= 0:
            raise InputError("native fps must be positive")
        if self.max_frames < 1:
            raise InputError("max_frames must be >= 1")
        if self.max_fps <= 0:
            raise InputError("max_fps must be positive")


@dataclass(frozen=True)
class FramePackage:
    frame_indices: tuple[int, ...]
    package_index: int
    timestamps_s: tuple[float, ...] | None = None


def sample_frames(spec: FrameSamplingSpec) -> list[float]:
    """Timestamps of sampled frames: midpoints of n equal sub-intervals.

    n = min(floor(duration * min(native_fps, max_fps)), max_frames),
    with at least one frame for very short clips.
    """
    effective_fps = min(spec.native_fps, spec.max_fps)
    n = max(1, min(math.floor(spec.duration_s * effective_fps), spec.max_frames))
    step = spec.duration_s / n
    return [(i + 0.5) * step for i in range(n)]


def pack(
    frame_count: int,
    package_size: int,
    timestamps_s: list[float] | None = None,
) -> list[FramePackage]:
    """Group frames 0..frame_count-1 into packages of adjacent frames.

    All packages are full except possibly the last; the short remainder
    is kept as-is rather than padded or dropped.
    """
    if frame_count < 1:
        raise InputError("frame_count must be >= 1")
    if package_size < 1:
        raise InputError("package_size must be >= 1")
    if timestamps_s is not None and len(timestamps_s) != frame_count:
        raise InputError(
            f"got {len(timestamps_s)} timestamps for {frame_count} frames"
        )
    packages = []
    for p in range(math.ceil(frame_count / package_size)):
        lo = p * package_size
        hi = min(lo + package_size, frame_count)
        packages.append(
            FramePackage(
                frame_indices=tuple(range(lo, hi)),
                package_index=p,
                timestamps_s=None
                if timestamps_s is None
                else tuple(timestamps_s[lo:hi]),
            )
        )
    return packages


def augment(spec: FrameSamplingSpec, seed: int) -> tuple[int, float]:
    """Random (package_size, fps) draw for training-time augmentation.

    package_size is uniform over {1..6}; fps is uniform over integers
    {1..max_fps} and then capped by the native rate. Deterministic per
    seed; the package size is drawn first.
    """
    rng = random.Random(seed)
    package_size = rng.randint(1, MAX_AUGMENT_PACKAGE_SIZE)
    fps = min(float(rng.randint(1, max(1, int(spec.max_fps)))), spec.native_fps)
    return package_size, fps
