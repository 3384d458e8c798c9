"""Loading of frames, motion-vector fields, labels and audio.

File formats are deliberately simple: numbered PGM/PPM frame directories,
JSON-lines motion fields, CSV label tracks and 16-bit mono WAV audio.
Motion vectors can also be recomputed from raw frames by exhaustive
block matching when no precomputed fields are available.
"""

from __future__ import annotations

import json
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class LoadError(Exception):
    """Raised when an input file is missing, corrupt or inconsistent."""


class ValidationError(Exception):
    """Raised when loaded data violates a documented invariant."""


@dataclass(frozen=True)
class FrameSequence:
    width: int
    height: int
    fps: float
    frames: tuple  # ndarray per frame, (H, W) grayscale or (H, W, 3) color

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if not self.frames:
            raise ValidationError("frame sequence must contain at least one frame")
        for i, f in enumerate(self.frames):
            if f.shape[:2] != (self.height, self.width):
                raise ValidationError(
                    f"frame {i} has dimensions {f.shape[1]}x{f.shape[0]}, "
                    f"expected {self.width}x{self.height}"
                )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class MotionVectorField:
    frame_index: int
    block_size: int
    vectors: np.ndarray  # (N, 4) columns x, y, dx, dy

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[1] != 4:
            raise ValidationError("vectors must be an (N, 4) array of x, y, dx, dy")
        object.__setattr__(self, "vectors", v)


@dataclass(frozen=True)
class GroundTruthTrack:
    entries: tuple  # of (start_frame, end_frame, activity_id)

    def __post_init__(self):
        prev_end = -1
        for start, end, activity in self.entries:
            if end < start:
                raise ValidationError(f"label interval ({start}, {end}) has end < start")
            if start <= prev_end:
                raise ValidationError(
                    f"label interval starting at {start} overlaps the previous one"
                )
            prev_end = end

    def label_at(self, frame: int, default: str = "NR") -> str:
        for start, end, activity in self.entries:
            if start <= frame <= end:
                return activity
        return default


@dataclass(frozen=True)
class AudioTrack:
    sample_rate: int
    samples: np.ndarray  # mono, float in [-1, 1]
    alignment: float = 0.0  # seconds offset to frame 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        s = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValidationError("audio samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


# ---------------------------------------------------------------------------
# PGM / PPM frame loading

_FRAME_PATTERN = re.compile(r"(\d+)\.(pgm|ppm)$", re.IGNORECASE)


def _read_pnm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # binary P5 (PGM) / P6 (PPM) with whitespace-separated header tokens
    if not data[:2] in (b"P5", b"P6"):
        raise LoadError(f"{path}: unsupported PNM magic {data[:2]!r}")
    color = data[:2] == b"P6"
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise LoadError(f"{path}: truncated PNM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise LoadError(f"{path}: 16-bit PNM not supported")
    channels = 3 if color else 1
    count = width * height * channels
    raster = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    if raster.size != count:
        raise LoadError(f"{path}: truncated raster data")
    img = raster.reshape(height, width, channels)
    return img[:, :, 0] if not color else img


def load_frames(path: str | Path, fps: float = 30.0) -> FrameSequence:
    """Load a directory of zero-padded numbered .pgm/.ppm frames."""
    directory = Path(path)
    if not directory.is_dir():
        raise LoadError(f"{directory}: not a directory")
    numbered = []
    for entry in directory.iterdir():
        m = _FRAME_PATTERN.search(entry.name)
        if m:
            numbered.append((int(m.group(1)), entry))
    if not numbered:
        raise LoadError(f"no frames found in {directory}")
    numbered.sort()
    frames = []
    for index, entry in numbered:
        try:
            frames.append(_read_pnm(entry))
        except LoadError:
            raise
        except Exception as exc:
            raise LoadError(f"frame {index} ({entry.name}): {exc}") from exc
    height, width = frames[0].shape[:2]
    for (index, _), f in zip(numbered, frames):
        if f.shape[:2] != (height, width):
            raise LoadError(
                f"frame {index} has dimensions {f.shape[1]}x{f.shape[0]}, "
                f"expected {width}x{height}"
            )
    return FrameSequence(width=width, height=height, fps=fps, frames=tuple(frames))


# ---------------------------------------------------------------------------
# Block matching

def block_matching(
    prev: np.ndarray,
    curr: np.ndarray,
    block_size: int = 16,
    search_range: int = 16,
    frame_index: int = 0,
) -> MotionVectorField:
    """Exhaustive SAD block matching of full blocks, forward (prev -> curr).

    Ties are broken by smallest displacement magnitude, then row-major
    (dy, dx) order. Partial border blocks are skipped.
    """
    prev = np.asarray(prev, dtype=np.int32)
    curr = np.asarray(curr, dtype=np.int32)
    if prev.shape != curr.shape:
        raise ValidationError("prev and curr frames must have identical dimensions")
    h, w = prev.shape[:2]
    if h < block_size or w < block_size:
        raise ValidationError("image smaller than one block")
    if prev.ndim == 3:
        prev = prev[:, :, 0]
        curr = curr[:, :, 0]

    # candidate displacements sorted by magnitude then row-major: the first
    # minimal-SAD candidate in this order wins
    offsets = [
        (dy, dx)
        for dy in range(-search_range, search_range + 1)
        for dx in range(-search_range, search_range + 1)
    ]
    offsets.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))

    vectors = []
    for by in range(0, h - block_size + 1, block_size):
        for bx in range(0, w - block_size + 1, block_size):
            block = prev[by : by + block_size, bx : bx + block_size]
            best_sad = None
            best = (0, 0)
            for dy, dx in offsets:
                ty, tx = by + dy, bx + dx
                if ty < 0 or tx < 0 or ty + block_size > h or tx + block_size > w:
                    continue
                sad = int(
                    np.abs(block - curr[ty : ty + block_size, tx : tx + block_size]).sum()
                )
                if best_sad is None or sad < best_sad:
                    best_sad = sad
                    best = (dx, dy)
            cx = bx + (block_size - 1) / 2.0
            cy = by + (block_size - 1) / 2.0
            vectors.append((cx, cy, best[0], best[1]))
    return MotionVectorField(
        frame_index=frame_index, block_size=block_size, vectors=np.array(vectors)
    )


# ---------------------------------------------------------------------------
# Motion field, label and audio files

def save_motion_fields(fields: Sequence[MotionVectorField], path: str | Path) -> None:
    """Write JSON-lines motion fields: {"frame": k, "block": b, "v": [[x,y,dx,dy],...]}."""
    with open(path, "w") as fh:
        for f in fields:
            obj = {
                "frame": f.frame_index,
                "block": f.block_size,
                "v": [[float(c) for c in row] for row in f.vectors],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_motion_fields(path: str | Path) -> list:
    fields = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            fields.append(
                MotionVectorField(
                    frame_index=int(obj["frame"]),
                    block_size=int(obj["block"]),
                    vectors=np.array(obj["v"], dtype=float).reshape(-1, 4),
                )
            )
    return fields


def load_labels(path: str | Path, activities: Sequence[str] | None = None) -> GroundTruthTrack:
    """Load a CSV of start_frame,end_frame,activity rows.

    If an activity set is given it must include the reject class "NR" and
    every row's activity must belong to it.
    """
    if activities is not None and "NR" not in activities:
        raise ValidationError('activity set must include the reject class "NR"')
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise LoadError(f"{path}:{lineno}: expected start,end,activity")
            start, end, activity = int(parts[0]), int(parts[1]), parts[2]
            if activities is not None and activity not in activities:
                raise ValidationError(f"{path}:{lineno}: unknown activity id {activity!r}")
            entries.append((start, end, activity))
    entries.sort()
    return GroundTruthTrack(entries=tuple(entries))


def save_labels(track: GroundTruthTrack, path: str | Path) -> None:
    with open(path, "w") as fh:
        for start, end, activity in track.entries:
            fh.write(f"{start},{end},{activity}\n")


def load_audio(path: str | Path, alignment: float = 0.0) -> AudioTrack:
    """Load a 16-bit mono PCM WAV file, scaled to [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise LoadError(f"{path}: expected mono audio")
            if wf.getsampwidth() != 2:
                raise LoadError(f"{path}: expected 16-bit PCM")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise LoadError(f"{path}: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return AudioTrack(sample_rate=rate, samples=samples, alignment=alignment)


def save_audio(track: AudioTrack, path: str | Path) -> None:
    clipped = np.clip(track.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(track.sample_rate)
        wf.writeframes(pcm.tobytes())
