"""Per-segment descriptors and their early fusion.

Blocks:
  htpe_x / htpe_y  log-energy histograms of the affine translation
                   parameters (5 bins each, averaged over the segment)
  hc               cut histogram over dyadic look-back windows (8 bins)
  cld              color layout descriptor, 12 leading DCT coefficients
  audio            5 scalar audio descriptors

The fused observation vector has up to 35 dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .ingest import AudioTrack
from .segmentation import Segment

LOG_EPS = 1e-12

BLOCK_ORDER = ("htpe_x", "htpe_y", "hc", "cld", "audio")
BLOCK_SIZES = {"htpe_x": 5, "htpe_y": 5, "hc": 8, "cld": 12, "audio": 5}


class DescriptorError(Exception):
    pass


@dataclass(frozen=True)
class HtpeHistogram:
    bins_x: np.ndarray
    bins_y: np.ndarray
    n_bins: int = 5


@dataclass(frozen=True)
class CutHistogram:
    bins: np.ndarray  # length N_c, bin i-1 counts cuts in the last 2^i frames


@dataclass(frozen=True)
class ColorLayoutDescriptor:
    y_coeffs: np.ndarray  # 6 values
    cb_coeffs: np.ndarray  # 3 values
    cr_coeffs: np.ndarray  # 3 values

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.y_coeffs, self.cb_coeffs, self.cr_coeffs])


@dataclass(frozen=True)
class AudioDescriptor:
    energy: float
    mod4hz: float
    entropy_mod: float
    seg_rate: float
    seg_dur: float

    @property
    def values(self) -> np.ndarray:
        return np.array([self.energy, self.mod4hz, self.entropy_mod,
                         self.seg_rate, self.seg_dur])


@dataclass(frozen=True)
class ObservationVector:
    values: np.ndarray
    layout: dict  # block name -> (offset, size)

    @property
    def dimension(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# Translation parameter energy histogram

def htpe_step(extent: float, n_bins: int = 5) -> float:
    """Bin step calibrated so a full-extent translation lands in the last bin."""
    return math.log(extent**2) / (n_bins - 1)


def htpe_bin(a: float, s_h: float, n_bins: int = 5) -> int:
    """1-based log-energy bin of a translation parameter."""
    energy = math.log(a * a + LOG_EPS)
    if energy < s_h:
        return 1
    if energy >= (n_bins - 1) * s_h:
        return n_bins
    return int(energy // s_h) + 1


def htpe_segment(models, width: int, height: int, n_bins: int = 5) -> HtpeHistogram:
    """Per-frame translation-energy histograms averaged over a segment."""
    models = list(models)
    if not models:
        raise DescriptorError("empty segment: no motion models")
    s_x = htpe_step(width, n_bins)
    s_y = htpe_step(height, n_bins)
    bins_x = np.zeros(n_bins)
    bins_y = np.zeros(n_bins)
    for m in models:
        bins_x[htpe_bin(m.a1, s_x, n_bins) - 1] += 1.0
        bins_y[htpe_bin(m.a4, s_y, n_bins) - 1] += 1.0
    return HtpeHistogram(bins_x=bins_x / len(models), bins_y=bins_y / len(models),
                         n_bins=n_bins)


# ---------------------------------------------------------------------------
# Cut histogram

def cut_histogram(cut_frames, frame: int, n_bins: int = 8) -> CutHistogram:
    """Counts of past cuts within the dyadic windows 2^1 .. 2^n_bins frames."""
    cuts = np.asarray(sorted(cut_frames), dtype=float)
    cuts = cuts[cuts <= frame]
    ages = frame - cuts
    bins = np.array([np.sum(ages < 2.0**i) for i in range(1, n_bins + 1)],
                    dtype=float)
    return CutHistogram(bins=bins)


def cut_histogram_segment(cut_frames, segment: Segment,
                          n_bins: int = 8) -> CutHistogram:
    """Per-frame cut histograms averaged over the segment's frames."""
    total = np.zeros(n_bins)
    for frame in range(segment.start_frame, segment.end_frame + 1):
        total += cut_histogram(cut_frames, frame, n_bins).bins
    return CutHistogram(bins=total / segment.length)


def cuts_from_segments(segments) -> list:
    """Cut positions of a segmentation: the start frame of each new segment."""
    return [seg.start_frame for seg in segments[1:]]


# ---------------------------------------------------------------------------
# Color layout descriptor

def _zigzag_order(n: int = 8):
    index = sorted(
        ((i, j) for i in range(n) for j in range(n)),
        key=lambda ij: (ij[0] + ij[1],
                        ij[1] if (ij[0] + ij[1]) % 2 == 0 else ij[0]),
    )
    return index


_ZIGZAG = _zigzag_order()


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """BT.601 full-range conversion; grayscale maps to (Y, 128, 128)."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        out = np.empty(img.shape + (3,))
        out[:, :, 0] = img
        out[:, :, 1] = 128.0
        out[:, :, 2] = 128.0
        return out
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def _region_means(channel: np.ndarray, grid: int = 8) -> np.ndarray:
    h, w = channel.shape
    means = np.empty((grid, grid))
    for i in range(grid):
        r0, r1 = i * h // grid, (i + 1) * h // grid
        for j in range(grid):
            c0, c1 = j * w // grid, (j + 1) * w // grid
            means[i, j] = channel[r0:r1, c0:c1].mean()
    return means


def cld(key_frame: np.ndarray) -> ColorLayoutDescriptor:
    """Leading orthonormal-DCT coefficients of the 8x8 region-averaged image.

    Coefficients are kept as real values; no MPEG-7 quantization.
    """
    img = np.asarray(key_frame)
    if img.ndim not in (2, 3) or img.shape[0] < 8 or img.shape[1] < 8:
        raise DescriptorError("key frame must be at least 8x8 pixels")
    ycbcr = rgb_to_ycbcr(img)
    scans = []
    for c in range(3):
        means = _region_means(ycbcr[:, :, c])
        coeffs = scipy.fft.dctn(means, norm="ortho")
        scans.append(np.array([coeffs[i, j] for i, j in _ZIGZAG]))
    return ColorLayoutDescriptor(
        y_coeffs=scans[0][:6], cb_coeffs=scans[1][:3], cr_coeffs=scans[2][:3]
    )


# ---------------------------------------------------------------------------
# Audio descriptors

WINDOW_S = 0.025
HOP_S = 0.010
DIV_WINDOW_S = 0.5
DIV_HOP_S = 0.1
MOD_BAND_HZ = (2.0, 8.0)
VAR_FLOOR = 1e-10


def _frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    n = 1 + (len(x) - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def _spectral_entropy(power: np.ndarray) -> float:
    total = power.sum()
    if total <= LOG_EPS:
        return 0.0
    p = power / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _spectral_centroid(power: np.ndarray, freqs: np.ndarray) -> float:
    total = power.sum()
    if total <= LOG_EPS:
        return 0.0
    return float((freqs * power).sum() / total)


def _divergence_changes(stream: np.ndarray, rate_hz: float,
                        threshold: float) -> list:
    """Change points of a feature stream by two-window Gaussian divergence.

    At each hop, diagonal Gaussians are fit to the trailing and leading
    windows and scored by symmetric KL; local maxima above the threshold
    are change points.
    """
    win = int(round(DIV_WINDOW_S * rate_hz))
    hop = max(1, int(round(DIV_HOP_S * rate_hz)))
    n = len(stream)
    centers = list(range(win, n - win + 1, hop))
    if not centers:
        return []
    scores = []
    for t in centers:
        left = stream[t - win : t]
        right = stream[t : t + win]
        m1, m2 = left.mean(axis=0), right.mean(axis=0)
        v1 = np.maximum(left.var(axis=0), VAR_FLOOR)
        v2 = np.maximum(right.var(axis=0), VAR_FLOOR)
        kl = 0.5 * (v1 / v2 + v2 / v1 - 2.0 + (m1 - m2) ** 2 * (1.0 / v1 + 1.0 / v2))
        scores.append(float(kl.sum()))
    changes = []
    for i, t in enumerate(centers):
        if scores[i] <= threshold:
            continue
        if i > 0 and scores[i] < scores[i - 1]:
            continue
        if i < len(scores) - 1 and scores[i] < scores[i + 1]:
            continue
        changes.append(t)
    return changes


def audio_features(track: AudioTrack, segment_time,
                   divergence_threshold: float = 2.0) -> AudioDescriptor:
    """Five scalar audio descriptors over a [start_s, end_s) window."""
    start_s, end_s = segment_time
    sr = track.sample_rate
    lo = max(0, int(round(start_s * sr)))
    hi = min(len(track.samples), int(round(end_s * sr)))
    x = track.samples[lo:hi]
    win = int(round(WINDOW_S * sr))
    hop = int(round(HOP_S * sr))
    if len(x) < win:
        raise DescriptorError("audio window shorter than one analysis frame")

    frames = _frame_signal(x, win, hop)
    energies = (frames**2).mean(axis=1)
    log_energies = np.log(energies + LOG_EPS)
    p1 = float(log_energies.mean())

    # 4 Hz modulation: band energy ratio of the mean-removed energy envelope
    envelope = energies - energies.mean()
    env_rate = 1.0 / HOP_S
    spectrum = np.abs(np.fft.rfft(envelope)) ** 2
    total = spectrum.sum()
    if total <= LOG_EPS:
        p2 = 0.0
    else:
        freqs = np.fft.rfftfreq(len(envelope), d=1.0 / env_rate)
        band = (freqs >= MOD_BAND_HZ[0]) & (freqs <= MOD_BAND_HZ[1])
        p2 = float(spectrum[band].sum() / total)

    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    freqs = np.fft.rfftfreq(win, d=1.0 / sr)
    entropies = np.array([_spectral_entropy(p) for p in power])
    p3 = float(entropies.std())

    centroids = np.array([_spectral_centroid(p, freqs) for p in power])
    stream = np.column_stack([log_energies, centroids])
    changes = _divergence_changes(stream, env_rate, divergence_threshold)
    duration = len(x) / sr
    p4 = len(changes) / duration
    bounds = [0] + changes + [len(stream)]
    seg_durations = np.diff(bounds) * HOP_S
    # segment grid is the envelope grid; with no change points the single
    # segment spans the whole window
    p5 = float(duration if not changes else seg_durations.mean())

    return AudioDescriptor(energy=p1, mod4hz=p2, entropy_mod=p3,
                           seg_rate=float(p4), seg_dur=p5)


# ---------------------------------------------------------------------------
# Fusion and normalization

def fuse(blocks: dict, active=BLOCK_ORDER) -> ObservationVector:
    """Concatenate the selected descriptor blocks in fixed order."""
    layout = {}
    parts = []
    offset = 0
    for name in BLOCK_ORDER:
        if name not in active:
            continue
        if name not in blocks or blocks[name] is None:
            raise DescriptorError(f"missing selected descriptor block {name!r}")
        values = np.asarray(blocks[name], dtype=float).ravel()
        if len(values) != BLOCK_SIZES[name]:
            raise DescriptorError(
                f"block {name!r} has {len(values)} values, "
                f"expected {BLOCK_SIZES[name]}"
            )
        layout[name] = (offset, BLOCK_SIZES[name])
        parts.append(values)
        offset += BLOCK_SIZES[name]
    if not parts:
        raise DescriptorError("no descriptor blocks selected")
    return ObservationVector(values=np.concatenate(parts), layout=layout)


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-score statistics, fit on training data only."""

    mean: np.ndarray
    std: np.ndarray

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, vectors: np.ndarray) -> "Normalizer":
        vectors = np.asarray(vectors, dtype=float)
        return cls(mean=vectors.mean(axis=0),
                   std=np.maximum(vectors.std(axis=0), cls.STD_FLOOR))

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        return (np.asarray(vectors, dtype=float) - self.mean) / self.std
