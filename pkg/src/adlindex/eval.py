"""Leave-one-video-out cross-validation and parameter sweeps.

A corpus is a list of VideoRecord objects carrying per-segment descriptor
blocks and a ground-truth label track. Each fold trains per-activity
bottom models and top-level transitions on all other videos and decodes
the held-out one. Folds whose training data cannot support some activity
model record a failure marker instead of aborting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .descriptors import BLOCK_ORDER, Normalizer, fuse
from .hhmm import (
    HierarchicalHMM,
    InsufficientDataError,
    NumericalError,
    baum_welch,
    estimate_top_transitions,
    flatten,
    init_activity_hmm,
    viterbi,
)
from .ingest import GroundTruthTrack
from .segmentation import Segment

REJECT_CLASS = "NR"

# granularity step of the segmentation-threshold analog used on
# feature-level corpora: s = GRANULARITY_STEP keeps every segment,
# larger thresholds merge round(s / GRANULARITY_STEP) segments into one
GRANULARITY_STEP = 0.05


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    segments: tuple  # of Segment
    blocks: tuple  # per-segment dict of descriptor blocks
    labels: GroundTruthTrack


@dataclass(frozen=True)
class EvalConfig:
    m: int = 3
    n_components: int = 1
    blocks: tuple = BLOCK_ORDER
    topology: str = "left_to_right"
    top_mode: str = "bigram"  # bigram | uniform
    seed: int = 0
    max_iter: int = 20
    tol: float = 1e-6


@dataclass(frozen=True)
class FoldResult:
    held_out_video: str
    per_segment_predictions: tuple  # of (Segment, predicted, truth)
    frame_weighted_accuracy: float
    segment_accuracy: float
    confusion: np.ndarray  # (K, K) counts, rows = truth
    activities: tuple
    status: str = "ok"

    @property
    def failed(self) -> bool:
        return self.status != "ok"


@dataclass(frozen=True)
class SweepResult:
    rows: tuple  # dicts with keys s, m, blocks, fold, accuracy, status

    def mean_accuracy(self, **criteria) -> float:
        vals = [r["accuracy"] for r in self.rows
                if r["status"] == "ok"
                and all(r[k] == v for k, v in criteria.items())]
        return float(np.mean(vals)) if vals else float("nan")

    def cell_rows(self, **criteria):
        return [r for r in self.rows
                if all(r[k] == v for k, v in criteria.items())]


def ground_truth_for_segment(track: GroundTruthTrack, segment: Segment,
                             reject: str = REJECT_CLASS) -> str:
    """Majority frame label of the segment; ties and unlabeled frames
    route to the reject class."""
    counts = {}
    for frame in range(segment.start_frame, segment.end_frame + 1):
        label = track.label_at(frame, default=reject)
        counts[label] = counts.get(label, 0) + 1
    best = max(counts.values())
    winners = sorted(label for label, c in counts.items() if c == best)
    if len(winners) > 1 and reject in winners:
        return reject
    return winners[0]


def _activity_runs(labels):
    """Contiguous runs of identical labels: list of (label, start_idx, end_idx)."""
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((labels[start], start, i - 1))
            start = i
    return runs


def _fused_video(record: VideoRecord, active_blocks):
    vectors = np.array([fuse(b, active_blocks).values for b in record.blocks])
    truth = [ground_truth_for_segment(record.labels, s) for s in record.segments]
    return vectors, truth


def train_model(records, config: EvalConfig,
                activities=None) -> HierarchicalHMM:
    """Train per-activity bottom models and top transitions on a record set."""
    data = [_fused_video(r, config.blocks) for r in records]
    if activities is None:
        seen = {label for _, truth in data for label in truth}
        seen.add(REJECT_CLASS)
        activities = sorted(seen)
    all_vectors = np.concatenate([v for v, _ in data])
    normalizer = Normalizer.fit(all_vectors)

    sequences_per_activity = {a: [] for a in activities}
    for vectors, truth in data:
        normalized = normalizer.transform(vectors)
        for label, start, end in _activity_runs(truth):
            run = normalized[start : end + 1]
            if len(run) >= config.m:  # left-to-right exit needs >= m steps
                sequences_per_activity[label].append(run)

    models = []
    for a in activities:
        seqs = sequences_per_activity.get(a, [])
        if not seqs:
            raise InsufficientDataError(
                f"insufficient data for activity {a!r}: no usable runs"
            )
        init = init_activity_hmm(a, seqs, config.m, config.n_components,
                                 seed=config.seed, topology=config.topology)
        trained, _ = baum_welch(init, seqs, max_iter=config.max_iter,
                                tol=config.tol)
        models.append(trained)

    if config.top_mode == "bigram":
        label_seqs = [truth for _, truth in data]
        top, init = estimate_top_transitions(label_seqs, activities)
    else:
        k = len(activities)
        top = np.full((k, k), 1.0 / k)
        init = np.full(k, 1.0 / k)

    layout = fuse(records[0].blocks[0], config.blocks).layout
    return HierarchicalHMM(
        activities=tuple(models), top_transition=top, top_initial=init,
        normalizer_mean=normalizer.mean, normalizer_std=normalizer.std,
        block_layout={k: list(v) for k, v in layout.items()},
    )


def decode_video(model: HierarchicalHMM, record: VideoRecord,
                 active_blocks=None):
    """Viterbi-decode a video's segments; returns per-segment labels."""
    active = active_blocks or (tuple(model.block_layout) if model.block_layout
                               else BLOCK_ORDER)
    vectors = np.array([fuse(b, active).values for b in record.blocks])
    normalizer = Normalizer(mean=model.normalizer_mean, std=model.normalizer_std)
    labels, score = viterbi(flatten(model), normalizer.transform(vectors))
    return labels, score


def _score_fold(record: VideoRecord, predicted, activities) -> FoldResult:
    index = {a: i for i, a in enumerate(activities)}
    confusion = np.zeros((len(activities), len(activities)), dtype=int)
    triples = []
    correct_frames = 0
    total_frames = 0
    correct_segments = 0
    for seg, pred in zip(record.segments, predicted):
        truth = ground_truth_for_segment(record.labels, seg)
        triples.append((seg, pred, truth))
        confusion[index[truth], index[pred]] += 1
        total_frames += seg.length
        if pred == truth:
            correct_frames += seg.length
            correct_segments += 1
    return FoldResult(
        held_out_video=record.video_id,
        per_segment_predictions=tuple(triples),
        frame_weighted_accuracy=correct_frames / total_frames,
        segment_accuracy=correct_segments / len(triples),
        confusion=confusion,
        activities=tuple(activities),
    )


def cross_validate(corpus, config: EvalConfig = EvalConfig()) -> list:
    """Leave-one-video-out evaluation; returns one FoldResult per video."""
    corpus = list(corpus)
    if len(corpus) < 2:
        raise EvalError("cross-validation needs at least 2 videos")
    activities = set([REJECT_CLASS])
    for record in corpus:
        for seg in record.segments:
            activities.add(ground_truth_for_segment(record.labels, seg))
    activities = sorted(activities)

    results = []
    for held_out in range(len(corpus)):
        test = corpus[held_out]
        train = corpus[:held_out] + corpus[held_out + 1 :]
        try:
            model = train_model(train, config, activities=activities)
            predicted, _ = decode_video(model, test, config.blocks)
        except (InsufficientDataError, NumericalError) as exc:
            results.append(FoldResult(
                held_out_video=test.video_id,
                per_segment_predictions=(),
                frame_weighted_accuracy=float("nan"),
                segment_accuracy=float("nan"),
                confusion=np.zeros((len(activities), len(activities)), dtype=int),
                activities=tuple(activities),
                status=f"training_failure: {exc}",
            ))
            continue
        results.append(_score_fold(test, predicted, activities))
    return results


# ---------------------------------------------------------------------------
# Granularity analog and sweeps

def coarsen_corpus(corpus, s: float) -> list:
    """Segmentation-threshold analog for feature-level corpora.

    Merges runs of round(s / GRANULARITY_STEP) consecutive segments into
    one (blocks averaged, frame span unioned), mimicking the loss of
    training observations at high segmentation thresholds.
    """
    group = max(1, int(round(s / GRANULARITY_STEP)))
    if group == 1:
        return list(corpus)
    coarse = []
    for record in corpus:
        segments = []
        blocks = []
        for i in range(0, len(record.segments), group):
            chunk_segs = record.segments[i : i + group]
            chunk_blocks = record.blocks[i : i + group]
            segments.append(Segment(start_frame=chunk_segs[0].start_frame,
                                    end_frame=chunk_segs[-1].end_frame))
            merged = {}
            for name in chunk_blocks[0]:
                merged[name] = np.mean([np.asarray(b[name], dtype=float)
                                        for b in chunk_blocks], axis=0)
            blocks.append(merged)
        coarse.append(replace(record, segments=tuple(segments),
                              blocks=tuple(blocks)))
    return coarse


def sweep(corpus, s_values, m_values, descriptor_configs,
          base_config: EvalConfig = EvalConfig()) -> SweepResult:
    """Cross-validate the full Cartesian grid of (s, m, block set)."""
    if not s_values or not m_values or not descriptor_configs:
        raise EvalError("sweep grids must be nonempty")
    rows = []
    for s in s_values:
        coarse = coarsen_corpus(corpus, s)
        for m in m_values:
            for blocks in descriptor_configs:
                config = replace(base_config, m=m, blocks=tuple(blocks))
                block_tag = "+".join(blocks)
                for fold in cross_validate(coarse, config):
                    rows.append({
                        "s": s, "m": m, "blocks": block_tag,
                        "fold": fold.held_out_video,
                        "accuracy": fold.frame_weighted_accuracy,
                        "status": fold.status,
                    })
    return SweepResult(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Reports

def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["s", "m", "blocks", "fold",
                                                "accuracy", "status"])
        writer.writeheader()
        for row in result.rows:
            out = dict(row)
            out["accuracy"] = ("" if not np.isfinite(row["accuracy"])
                               else f"{row['accuracy']:.6f}")
            writer.writerow(out)


def write_confusion_csv(fold: FoldResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\pred"] + list(fold.activities))
        for a, row in zip(fold.activities, fold.confusion):
            writer.writerow([a] + [int(c) for c in row])


def plot_sweep_curves(result: SweepResult, path, by: str = "blocks") -> None:
    """Accuracy-vs-s line chart, one curve per block set (or per m)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 5))
    curves = sorted({row[by] for row in result.rows}, key=str)
    s_values = sorted({row["s"] for row in result.rows})
    for curve in curves:
        ys = [result.mean_accuracy(**{by: curve, "s": s}) for s in s_values]
        ax.plot(s_values, ys, marker="o", label=str(curve))
    ax.set_xlabel("segmentation threshold s")
    ax.set_ylabel("mean frame-weighted accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)
