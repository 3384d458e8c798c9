"""Deterministic generators for ground-truth-known test inputs.

Everything here is a pure function of (spec, seed): motion-vector fields
from known affine parameters, observation sequences sampled from a
hierarchical HMM, and feature-level corpora with labels and a manifest
consumable by the evaluation stack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descriptors import BLOCK_ORDER, BLOCK_SIZES
from .eval import VideoRecord
from .hhmm import HierarchicalHMM
from .ingest import GroundTruthTrack, MotionVectorField
from .motion import AffineMotionModel, apply_model
from .segmentation import Segment

OUTLIER_RANGE = 16.0  # px, uniform gross-outlier displacements
FULL_DIMENSION = sum(BLOCK_SIZES.values())


class SpecError(Exception):
    pass


@dataclass(frozen=True)
class MotionFieldSpec:
    model: AffineMotionModel
    width: int = 640
    height: int = 480
    block_size: int = 16
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction < 0.5:
            raise SpecError(
                "outlier_fraction must lie in [0, 0.5): the robust "
                "estimator breaks down at half contamination"
            )
        if self.noise_sigma < 0:
            raise SpecError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class CorpusSpec:
    activity_means: dict  # activity_id -> mean vector (full layout dimension)
    scripts: tuple  # per video: tuple of (activity_id, n_segments)
    emission_sigma: float = 1.0
    frames_per_segment: int = 30
    seed: int = 0

    def __post_init__(self):
        dims = {len(np.asarray(m)) for m in self.activity_means.values()}
        if dims != {FULL_DIMENSION}:
            raise SpecError(
                f"activity means must have the full layout dimension "
                f"{FULL_DIMENSION}, got {sorted(dims)}"
            )
        for script in self.scripts:
            for activity, duration in script:
                if duration < 1:
                    raise SpecError("script durations must be >= 1 segment")
                if activity not in self.activity_means:
                    raise SpecError(f"script references unknown activity "
                                    f"{activity!r}")


def gen_motion_field(spec: MotionFieldSpec,
                     frame_index: int = 0) -> MotionVectorField:
    """Exact affine displacements at block centers plus noise and outliers."""
    rng = np.random.default_rng(spec.seed)
    half = (spec.block_size - 1) / 2.0
    xs = np.arange(half, spec.width - spec.block_size + half + 1, spec.block_size)
    ys = np.arange(half, spec.height - spec.block_size + half + 1, spec.block_size)
    gx, gy = np.meshgrid(xs, ys)
    x = gx.ravel()
    y = gy.ravel()
    px, py = apply_model(spec.model, (x, y))
    dx = px - x
    dy = py - y
    if spec.noise_sigma > 0:
        dx = dx + rng.normal(0.0, spec.noise_sigma, size=len(x))
        dy = dy + rng.normal(0.0, spec.noise_sigma, size=len(y))
    n_outliers = int(round(spec.outlier_fraction * len(x)))
    if n_outliers:
        idx = rng.choice(len(x), size=n_outliers, replace=False)
        dx = np.array(dx, dtype=float)
        dy = np.array(dy, dtype=float)
        dx[idx] = rng.uniform(-OUTLIER_RANGE, OUTLIER_RANGE, size=n_outliers)
        dy[idx] = rng.uniform(-OUTLIER_RANGE, OUTLIER_RANGE, size=n_outliers)
    return MotionVectorField(frame_index=frame_index, block_size=spec.block_size,
                             vectors=np.column_stack([x, y, dx, dy]))


def gen_hhmm_sequence(h: HierarchicalHMM, length: int, seed: int = 0):
    """Ancestral sampling; returns (observations, [(activity_id, substate)])."""
    rng = np.random.default_rng(seed)
    ids = h.activity_ids
    k = len(ids)
    activity = int(rng.choice(k, p=h.top_initial))
    substate = int(rng.choice(h.activities[activity].n_states,
                              p=h.activities[activity].entry))
    observations = []
    path = []
    for _ in range(length):
        act = h.activities[activity]
        gmm = act.states[substate]
        comp = int(rng.choice(gmm.n_components, p=gmm.weights))
        obs = rng.normal(gmm.means[comp], np.sqrt(gmm.variances[comp]))
        observations.append(obs)
        path.append((ids[activity], substate))
        # one bottom-level step; leaving through exit re-enters via the top
        probs = np.append(act.transitions[substate], act.exit[substate])
        move = int(rng.choice(act.n_states + 1, p=probs))
        if move < act.n_states:
            substate = move
        else:
            activity = int(rng.choice(k, p=h.top_transition[activity]))
            substate = int(rng.choice(h.activities[activity].n_states,
                                      p=h.activities[activity].entry))
    return np.array(observations), path


def _blocks_from_vector(values: np.ndarray) -> dict:
    blocks = {}
    offset = 0
    for name in BLOCK_ORDER:
        size = BLOCK_SIZES[name]
        blocks[name] = values[offset : offset + size].copy()
        offset += size
    return blocks


def gen_video_record(spec: CorpusSpec, video_index: int) -> VideoRecord:
    """One synthetic video of the corpus: segments, blocks and labels."""
    rng = np.random.default_rng((spec.seed, video_index))
    script = spec.scripts[video_index]
    segments = []
    blocks = []
    entries = []
    frame = 0
    for activity, n_segments in script:
        run_start = frame
        mean = np.asarray(spec.activity_means[activity], dtype=float)
        for _ in range(n_segments):
            values = rng.normal(mean, spec.emission_sigma)
            blocks.append(_blocks_from_vector(values))
            segments.append(Segment(start_frame=frame,
                                    end_frame=frame + spec.frames_per_segment - 1))
            frame += spec.frames_per_segment
        entries.append((run_start, frame - 1, activity))
    return VideoRecord(
        video_id=f"v{video_index}",
        segments=tuple(segments),
        blocks=tuple(blocks),
        labels=GroundTruthTrack(entries=tuple(entries)),
    )


def gen_corpus(spec: CorpusSpec, out_dir: str | Path | None = None) -> list:
    """Generate the whole corpus; optionally write features, labels and a
    TOML manifest to out_dir."""
    records = [gen_video_record(spec, i) for i in range(len(spec.scripts))]
    if out_dir is not None:
        from .pipeline import save_features  # deferred: pipeline imports eval

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for record in records:
            feat = f"{record.video_id}_features.jsonl"
            labels = f"{record.video_id}_labels.csv"
            save_features(record, out / feat)
            with open(out / labels, "w") as fh:
                for start, end, activity in record.labels.entries:
                    fh.write(f"{start},{end},{activity}\n")
            lines.append("[[videos]]\n"
                         f'id = "{record.video_id}"\n'
                         f'features = "{feat}"\n'
                         f'labels = "{labels}"\n')
        (out / "corpus.toml").write_text("\n".join(lines))
    return records


def separable_corpus_spec(n_activities: int = 6, n_videos: int = 6,
                          segments_per_run: int = 8, separation: float = 4.0,
                          seed: int = 0) -> CorpusSpec:
    """A corpus whose classes are separated by `separation` sigmas.

    Activities a0..a(n-1) plus the reject class NR; every video's script
    cycles through all activities with NR interludes.
    """
    names = [f"a{i}" for i in range(n_activities)] + ["NR"]
    means = {}
    for i, name in enumerate(names):
        mean = np.zeros(FULL_DIMENSION)
        # offset a distinct pair of dimensions per class; pairwise distance
        # >= separation * sqrt(2) sigmas
        mean[(2 * i) % FULL_DIMENSION] = separation * (1 + i // FULL_DIMENSION)
        mean[(2 * i + 1) % FULL_DIMENSION] = separation
        means[name] = mean
    scripts = []
    for v in range(n_videos):
        script = []
        order = names[:-1][v % n_activities :] + names[:-1][: v % n_activities]
        for name in order:
            script.append((name, segments_per_run))
            script.append(("NR", max(3, segments_per_run // 2)))
        scripts.append(tuple(script))
    return CorpusSpec(activity_means=means, scripts=tuple(scripts),
                      emission_sigma=1.0, seed=seed)
