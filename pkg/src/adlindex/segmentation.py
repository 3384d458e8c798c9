"""Viewpoint segmentation by corner trajectories.

The four image corners are propagated through the per-frame affine
models; a corner becomes "outbound" once its distance from its position
at the segment start reaches s * width. A segment ends when enough
corners are outbound (after the minimum length) or at the maximum
length, whichever comes first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .motion import AffineMotionModel, apply_model


class SegmentationError(Exception):
    pass


@dataclass(frozen=True)
class SegmenterConfig:
    s: float = 0.2  # overlap-rate threshold
    min_len: int = 5
    max_len: int = 1000
    corners_required: int = 3

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if not 1 <= self.corners_required <= 4:
            raise ValueError("corners_required must be in 1..4")


@dataclass(frozen=True)
class CornerState:
    positions: tuple  # four (x, y)
    initial_positions: tuple  # four (x, y)
    outbound_flags: tuple  # four bools, monotone within a segment

    @classmethod
    def initial(cls, width: int, height: int) -> "CornerState":
        corners = (
            (0.0, 0.0),
            (width - 1.0, 0.0),
            (0.0, height - 1.0),
            (width - 1.0, height - 1.0),
        )
        return cls(positions=corners, initial_positions=corners,
                   outbound_flags=(False,) * 4)

    @property
    def outbound_count(self) -> int:
        return sum(self.outbound_flags)


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int  # inclusive

    def __post_init__(self):
        if self.end_frame < self.start_frame:
            raise ValueError("segment end before start")

    @property
    def key_frame(self) -> int:
        return (self.start_frame + self.end_frame) // 2

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


def propagate_corners(state: CornerState, model: AffineMotionModel,
                      s: float, width: int) -> CornerState:
    """Advance corner positions one frame and update outbound flags.

    A corner is flagged once its distance from its segment-initial
    position reaches the outbound radius s * width; flags are never
    cleared within a segment.
    """
    radius = s * width
    positions = tuple(apply_model(model, p) for p in state.positions)
    flags = tuple(
        flag or math.dist(pos, init) >= radius
        for flag, pos, init in zip(state.outbound_flags, positions,
                                   state.initial_positions)
    )
    return replace(state, positions=positions, outbound_flags=flags)


def segment_video(models, width: int, cfg: SegmenterConfig = SegmenterConfig(),
                  height: int | None = None) -> list:
    """Greedy left-to-right segmentation of a video into viewpoint segments.

    `models` holds the N-1 frame transitions of an N-frame video
    (models[t] maps frame t to frame t+1). Returns segments that
    partition [0, N-1]; only the final segment may be shorter than
    cfg.min_len.
    """
    models = list(models)
    n_frames = len(models) + 1
    if height is None:
        height = (width * 3) // 4
    segments = []
    start = 0
    state = CornerState.initial(width, height)
    for frame in range(1, n_frames):
        if frame == start:
            # the transition into a segment's first frame straddles the
            # boundary; corner trajectories start at that frame
            continue
        state = propagate_corners(state, models[frame - 1], cfg.s, width)
        length = frame - start + 1
        cut = (length >= cfg.min_len
               and state.outbound_count >= cfg.corners_required)
        if cut or length >= cfg.max_len:
            segments.append(Segment(start_frame=start, end_frame=frame))
            start = frame + 1
            state = CornerState.initial(width, height)
    if start < n_frames:
        segments.append(Segment(start_frame=start, end_frame=n_frames - 1))
    return segments


def save_segments(segments, path) -> None:
    with open(path, "w") as fh:
        fh.write("start,end,key\n")
        for seg in segments:
            fh.write(f"{seg.start_frame},{seg.end_frame},{seg.key_frame}\n")


def load_segments(path) -> list:
    segments = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("start"):
                continue
            start, end, _key = (int(p) for p in line.split(","))
            segments.append(Segment(start_frame=start, end_frame=end))
    return segments
