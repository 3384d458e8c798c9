import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adlindex.motion import AffineMotionModel, apply_model
from adlindex.segmentation import (
    CornerState,
    Segment,
    SegmenterConfig,
    propagate_corners,
    segment_video,
)


def reference_segmenter(models, width, height, cfg):
    """Independent frame-by-frame simulator used as an oracle.

    Tracks corner positions with plain loops; shares no code with
    segment_video.
    """
    corners0 = [(0.0, 0.0), (width - 1.0, 0.0), (0.0, height - 1.0),
                (width - 1.0, height - 1.0)]
    n = len(models) + 1
    segments = []
    start = 0
    pos = [list(c) for c in corners0]
    flags = [False] * 4
    frame = 0
    for frame in range(1, n):
        if frame == start:
            continue  # trajectory starts at the segment's first frame
        m = models[frame - 1]
        for c in range(4):
            x, y = pos[c]
            pos[c] = [x + m.a1 + m.a2 * x + m.a3 * y,
                      y + m.a4 + m.a5 * x + m.a6 * y]
            d = math.hypot(pos[c][0] - corners0[c][0],
                           pos[c][1] - corners0[c][1])
            if d >= cfg.s * width:
                flags[c] = True
        length = frame - start + 1
        if (length >= cfg.min_len and sum(flags) >= cfg.corners_required) \
                or length >= cfg.max_len:
            segments.append((start, frame))
            start = frame + 1
            pos = [list(c) for c in corners0]
            flags = [False] * 4
    if start < n:
        segments.append((start, n - 1))
    return segments


def random_models(rng, n):
    models = []
    for _ in range(n):
        models.append(AffineMotionModel(
            a1=rng.uniform(-6, 6), a4=rng.uniform(-6, 6),
            a2=rng.uniform(-0.01, 0.01), a3=rng.uniform(-0.01, 0.01),
            a5=rng.uniform(-0.01, 0.01), a6=rng.uniform(-0.01, 0.01)))
    return models


class TestPropagateCorners:
    def test_identity_model(self):
        state = CornerState.initial(640, 480)
        out = propagate_corners(state, AffineMotionModel(), s=0.2, width=640)
        assert out.positions == state.positions
        assert out.outbound_flags == (False,) * 4

    def test_threshold_step(self):
        state = CornerState.initial(640, 480)
        model = AffineMotionModel(a1=0.2 * 640 + 1.0)
        out = propagate_corners(state, model, s=0.2, width=640)
        assert out.outbound_flags == (True,) * 4

    def test_flag_set_after_64_steps(self):
        # w=640, s=0.2, a1=2 per frame: outbound radius 128 reached at
        # step ceil(128/2) = 64
        state = CornerState.initial(640, 480)
        model = AffineMotionModel(a1=2.0)
        for step in range(1, 65):
            state = propagate_corners(state, model, s=0.2, width=640)
            if step < 64:
                assert state.outbound_flags == (False,) * 4, step
        assert state.outbound_flags == (True,) * 4

    def test_flags_monotone(self):
        state = CornerState.initial(640, 480)
        outward = AffineMotionModel(a1=0.2 * 640 + 1.0)
        back = AffineMotionModel(a1=-(0.2 * 640 + 1.0))
        state = propagate_corners(state, outward, s=0.2, width=640)
        state = propagate_corners(state, back, s=0.2, width=640)
        assert state.outbound_flags == (True,) * 4  # never cleared


class TestSegmentVideo:
    def test_max_len_on_static_video(self):
        models = [AffineMotionModel()] * 2999
        segments = segment_video(models, width=640, height=480)
        spans = [(s.start_frame, s.end_frame) for s in segments]
        assert spans == [(0, 999), (1000, 1999), (2000, 2999)]

    def test_constant_translation_matches_oracle(self):
        cfg = SegmenterConfig(s=0.2)
        models = [AffineMotionModel(a1=2.0)] * 499
        segments = segment_video(models, width=640, cfg=cfg, height=480)
        oracle = reference_segmenter(models, 640, 480, cfg)
        assert [(s.start_frame, s.end_frame) for s in segments] == oracle
        lengths = [s.length for s in segments[:-1]]
        assert len(set(lengths)) == 1
        assert lengths[0] >= cfg.min_len

    def test_short_video_single_segment(self):
        segments = segment_video([AffineMotionModel()] * 6, width=640,
                                 height=480)
        assert len(segments) == 1
        assert (segments[0].start_frame, segments[0].end_frame) == (0, 6)
        assert segments[0].key_frame == 3

    def test_partition_property(self):
        rng = np.random.default_rng(5)
        models = random_models(rng, 400)
        segments = segment_video(models, width=640, height=480)
        assert segments[0].start_frame == 0
        assert segments[-1].end_frame == 400
        for a, b in zip(segments, segments[1:]):
            assert b.start_frame == a.end_frame + 1

    @given(seed=st.integers(0, 10_000), n=st.integers(1, 300),
           s=st.floats(0.05, 0.8))
    @settings(max_examples=60, deadline=None)
    def test_matches_reference_simulator(self, seed, n, s):
        rng = np.random.default_rng(seed)
        models = random_models(rng, n)
        cfg = SegmenterConfig(s=s)
        segments = segment_video(models, width=640, cfg=cfg, height=480)
        oracle = reference_segmenter(models, 640, 480, cfg)
        assert [(seg.start_frame, seg.end_frame) for seg in segments] == oracle

    def test_threshold_monotonicity(self):
        models = [AffineMotionModel(a1=1.5)] * 999
        cuts = {}
        for s in (0.1, 0.2, 0.4):
            segs = segment_video(models, width=640,
                                 cfg=SegmenterConfig(s=s), height=480)
            cuts[s] = [seg.end_frame for seg in segs[:-1]]
        # later thresholds cut at or after the corresponding earlier cut
        for lo, hi in ((0.1, 0.2), (0.2, 0.4)):
            for c_lo, c_hi in zip(cuts[lo], cuts[hi]):
                assert c_hi >= c_lo

    def test_key_frame_is_temporal_center(self):
        rng = np.random.default_rng(8)
        models = random_models(rng, 250)
        for seg in segment_video(models, width=640, height=480):
            assert seg.key_frame == (seg.start_frame + seg.end_frame) // 2

    def test_min_len_never_violated_mid_video(self):
        models = [AffineMotionModel(a1=640.0)] * 50  # instant outbound
        cfg = SegmenterConfig(s=0.1, min_len=5)
        segments = segment_video(models, width=640, cfg=cfg, height=480)
        for seg in segments[:-1]:
            assert seg.length >= cfg.min_len
