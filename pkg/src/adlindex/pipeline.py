"""End-to-end feature extraction and corpus manifest loading.

Ties the stages together: frames (or precomputed motion fields) ->
affine models -> viewpoint segments -> per-segment descriptor blocks,
and reads/writes the JSON-lines features format shared by the CLI and
the evaluation stack.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

try:
    import tomllib as toml_reader
except ImportError:  # python < 3.11
    import tomli as toml_reader

from . import descriptors as desc
from .eval import VideoRecord
from .ingest import (
    AudioTrack,
    FrameSequence,
    LoadError,
    block_matching,
    load_audio,
    load_frames,
    load_labels,
    load_motion_fields,
)
from .motion import AffineMotionModel, RobustConfig, estimate_affine
from .segmentation import Segment, SegmenterConfig, segment_video


def estimate_models(fields, cfg: RobustConfig = RobustConfig()) -> list:
    return [estimate_affine(f, cfg) for f in fields]


def fields_from_frames(frames: FrameSequence, block_size: int = 16,
                       search_range: int = 16) -> list:
    return [
        block_matching(frames.frames[t], frames.frames[t + 1],
                       block_size=block_size, search_range=search_range,
                       frame_index=t + 1)
        for t in range(len(frames) - 1)
    ]


def save_models(models, path) -> None:
    with open(path, "w") as fh:
        for k, m in enumerate(models, start=1):
            obj = {"frame": k, "a": [float(v) for v in m.params],
                   "inlier_fraction": float(m.inlier_fraction)}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_models(path) -> list:
    models = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            models.append(AffineMotionModel.from_params(
                obj["a"], inlier_fraction=obj.get("inlier_fraction", 1.0)))
    return models


def extract_segment_blocks(segments, models, width: int, height: int,
                           frames: FrameSequence | None = None,
                           audio: AudioTrack | None = None,
                           fps: float = 30.0) -> list:
    """Per-segment descriptor blocks for one video.

    models[t] is the transition frame t -> t+1. Dynamic blocks are always
    computed; CLD needs frames, the audio block needs an audio track.
    """
    cuts = desc.cuts_from_segments(segments)
    blocks = []
    for seg in segments:
        # transitions landing inside the segment; a one-frame head segment
        # falls back to its outgoing transition
        lo = max(seg.start_frame - 1, 0)
        hi = min(seg.end_frame - 1, len(models) - 1)
        seg_models = models[lo : hi + 1] or models[:1]
        htpe = desc.htpe_segment(seg_models, width, height)
        hc = desc.cut_histogram_segment(cuts, seg)
        entry = {"htpe_x": htpe.bins_x, "htpe_y": htpe.bins_y, "hc": hc.bins}
        if frames is not None:
            entry["cld"] = desc.cld(frames.frames[seg.key_frame]).values
        if audio is not None:
            start_s = seg.start_frame / fps + audio.alignment
            end_s = (seg.end_frame + 1) / fps + audio.alignment
            entry["audio"] = desc.audio_features(audio, (start_s, end_s)).values
        blocks.append(entry)
    return blocks


def extract_video(video_id: str, frames_dir=None, fields_path=None,
                  audio_path=None, labels_path=None, fps: float = 30.0,
                  seg_cfg: SegmenterConfig = SegmenterConfig(),
                  robust_cfg: RobustConfig = RobustConfig(),
                  width: int | None = None,
                  height: int | None = None) -> VideoRecord:
    """Run the full pipeline for one video described by file paths."""
    frames = None
    if frames_dir is not None:
        frames = load_frames(frames_dir, fps=fps)
        width, height = frames.width, frames.height
    if fields_path is not None:
        fields = load_motion_fields(fields_path)
    elif frames is not None:
        fields = fields_from_frames(frames)
    else:
        raise LoadError("need either a frame directory or a motion-field file")
    if width is None:
        raise LoadError("frame width unknown: pass width explicitly "
                        "when only motion fields are given")
    if height is None:
        height = (width * 3) // 4
    models = estimate_models(fields, robust_cfg)
    segments = segment_video(models, width, seg_cfg, height=height)
    audio = load_audio(audio_path) if audio_path else None
    blocks = extract_segment_blocks(segments, models, width, height,
                                    frames=frames, audio=audio, fps=fps)
    from .ingest import GroundTruthTrack
    labels = (load_labels(labels_path) if labels_path
              else GroundTruthTrack(entries=()))
    return VideoRecord(video_id=video_id, segments=tuple(segments),
                       blocks=tuple(blocks), labels=labels)


# ---------------------------------------------------------------------------
# Features file format

def save_features(record: VideoRecord, path) -> None:
    """JSON-lines, one object per segment with its descriptor blocks."""
    with open(path, "w") as fh:
        for seg, blocks in zip(record.segments, record.blocks):
            obj = {
                "video": record.video_id,
                "start": seg.start_frame,
                "end": seg.end_frame,
                "blocks": {k: [float(x) for x in np.ravel(v)]
                           for k, v in blocks.items()},
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_features(path, video_id=None, labels=None) -> VideoRecord:
    from .ingest import GroundTruthTrack

    segments = []
    blocks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if video_id is None:
                video_id = obj["video"]
            segments.append(Segment(start_frame=int(obj["start"]),
                                    end_frame=int(obj["end"])))
            blocks.append({k: np.array(v, dtype=float)
                           for k, v in obj["blocks"].items()})
    if not segments:
        raise LoadError(f"{path}: no feature records found")
    if labels is None:
        labels = GroundTruthTrack(entries=())
    return VideoRecord(video_id=video_id, segments=tuple(segments),
                       blocks=tuple(blocks), labels=labels)


# ---------------------------------------------------------------------------
# Corpus manifests

def load_corpus(manifest_path, s: float | None = None,
                fps: float = 30.0) -> list:
    """Load a TOML corpus manifest into VideoRecords.

    Each [[videos]] entry either points at a precomputed features file or
    at raw inputs (frames directory, optional audio), in which case the
    full pipeline runs with segmentation threshold s.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, "rb") as fh:
        doc = toml_reader.load(fh)
    base = manifest_path.parent
    records = []
    for entry in doc.get("videos", []):
        video_id = entry["id"]
        labels_path = base / entry["labels"] if "labels" in entry else None
        if "features" in entry:
            labels = load_labels(labels_path) if labels_path else None
            records.append(load_features(base / entry["features"],
                                         video_id=video_id, labels=labels))
        elif "frames" in entry:
            seg_cfg = (SegmenterConfig(s=s) if s is not None
                       else SegmenterConfig())
            records.append(extract_video(
                video_id,
                frames_dir=base / entry["frames"],
                fields_path=(base / entry["fields"]) if "fields" in entry else None,
                audio_path=(base / entry["audio"]) if "audio" in entry else None,
                labels_path=labels_path,
                fps=float(entry.get("fps", fps)),
                seg_cfg=seg_cfg,
            ))
        else:
            raise LoadError(
                f"manifest entry {video_id!r} needs a 'features' file or "
                f"a 'frames' directory"
            )
    if not records:
        raise LoadError(f"{manifest_path}: no videos in manifest")
    return records
