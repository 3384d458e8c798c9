import numpy as np
import pytest

from adlindex.eval import (
    EvalConfig,
    EvalError,
    VideoRecord,
    coarsen_corpus,
    cross_validate,
    ground_truth_for_segment,
    sweep,
    train_model,
    write_confusion_csv,
    write_sweep_csv,
)
from adlindex.ingest import GroundTruthTrack
from adlindex.segmentation import Segment
from adlindex.synth import gen_corpus, separable_corpus_spec


@pytest.fixture(scope="module")
def corpus():
    spec = separable_corpus_spec(n_activities=3, n_videos=3,
                                 segments_per_run=8, seed=42)
    return gen_corpus(spec)


class TestGroundTruthForSegment:
    TRACK = GroundTruthTrack(entries=((0, 99, "tea"), (100, 199, "coffee")))

    def test_fully_inside(self):
        assert ground_truth_for_segment(self.TRACK, Segment(10, 50)) == "tea"

    def test_majority(self):
        # frames 70..99 tea (30), 100..119 coffee (20)
        assert ground_truth_for_segment(self.TRACK, Segment(70, 119)) == "tea"

    def test_tie_routes_to_nr(self):
        track = GroundTruthTrack(entries=((0, 4, "tea"),))
        # frames 0..4 tea, 5..9 unlabeled -> NR; exact 50/50
        assert ground_truth_for_segment(track, Segment(0, 9)) == "NR"

    def test_unlabeled_is_nr(self):
        assert ground_truth_for_segment(self.TRACK, Segment(300, 350)) == "NR"


class TestCrossValidate:
    def test_separable_corpus_high_accuracy(self, corpus):
        results = cross_validate(corpus, EvalConfig(m=3, seed=0))
        for fold in results:
            assert not fold.failed
            assert fold.frame_weighted_accuracy >= 0.90

    def test_identical_videos_near_perfect(self):
        from dataclasses import replace

        from adlindex.synth import gen_video_record

        spec = separable_corpus_spec(n_activities=3, n_videos=1,
                                     segments_per_run=8, seed=5)
        video = gen_video_record(spec, 0)
        twin = replace(video, video_id="v1")
        results = cross_validate([video, twin], EvalConfig(m=3, seed=0))
        for fold in results:
            assert fold.frame_weighted_accuracy >= 0.95

    def test_single_video_error(self, corpus):
        with pytest.raises(EvalError):
            cross_validate(corpus[:1])

    def test_insufficient_data_marker(self, corpus):
        # m far above the observations available per activity run
        results = cross_validate(coarsen_corpus(corpus, 0.8),
                                 EvalConfig(m=7, seed=0))
        assert any(fold.failed for fold in results)
        for fold in results:
            if fold.failed:
                assert "training_failure" in fold.status
                assert np.isnan(fold.frame_weighted_accuracy)

    def test_confusion_sums_to_segments(self, corpus):
        results = cross_validate(corpus, EvalConfig(m=3, seed=0))
        for fold, record in zip(results, corpus):
            assert fold.confusion.sum() == len(record.segments)

    def test_perfect_prediction_diagonal(self, corpus):
        results = cross_validate(corpus, EvalConfig(m=3, seed=0))
        for fold in results:
            if fold.frame_weighted_accuracy == 1.0:
                off_diag = fold.confusion.sum() - np.trace(fold.confusion)
                assert off_diag == 0

    def test_frame_weighted_matches_per_frame_comparison(self, corpus):
        results = cross_validate(corpus, EvalConfig(m=3, seed=0))
        for fold, record in zip(results, corpus):
            predicted_by_frame = {}
            for seg, pred, _ in fold.per_segment_predictions:
                for f in range(seg.start_frame, seg.end_frame + 1):
                    predicted_by_frame[f] = pred
            total = correct = 0
            for seg in record.segments:
                truth = ground_truth_for_segment(record.labels, seg)
                for f in range(seg.start_frame, seg.end_frame + 1):
                    total += 1
                    correct += predicted_by_frame[f] == truth
            assert fold.frame_weighted_accuracy == pytest.approx(correct / total)

    def test_determinism(self, corpus):
        r1 = cross_validate(corpus, EvalConfig(m=3, seed=3))
        r2 = cross_validate(corpus, EvalConfig(m=3, seed=3))
        for a, b in zip(r1, r2):
            assert a.frame_weighted_accuracy == b.frame_weighted_accuracy
            assert np.array_equal(a.confusion, b.confusion)


class TestSweep:
    def test_single_cell_equals_cross_validate(self, corpus):
        config = EvalConfig(seed=0)
        result = sweep(corpus, [0.05], [3], [("htpe_x", "htpe_y", "hc",
                                              "cld", "audio")],
                       base_config=config)
        folds = cross_validate(corpus, EvalConfig(m=3, seed=0))
        cell = result.cell_rows(s=0.05, m=3)
        assert len(cell) == len(folds)
        for row, fold in zip(cell, folds):
            assert row["accuracy"] == fold.frame_weighted_accuracy

    def test_failure_markers_recorded(self, corpus):
        result = sweep(corpus, [0.8], [7], [("htpe_x", "htpe_y")])
        statuses = {row["status"] for row in result.rows}
        assert any(s.startswith("training_failure") for s in statuses)

    def test_empty_grid_error(self, corpus):
        with pytest.raises(EvalError):
            sweep(corpus, [], [3], [("cld",)])

    def test_informative_blocks_beat_noise_blocks(self):
        # motion blocks separate the classes, audio block is pure noise
        from adlindex.synth import CorpusSpec, FULL_DIMENSION

        rng = np.random.default_rng(0)
        means = {}
        for i, name in enumerate(["a0", "a1", "NR"]):
            mean = np.zeros(FULL_DIMENSION)
            mean[i] = 6.0  # dims 0..2 live in the htpe_x block
            means[name] = mean
        scripts = tuple(
            tuple((name, 6) for name in ("a0", "a1", "NR"))
            for _ in range(3))
        corpus = gen_corpus(CorpusSpec(activity_means=means, scripts=scripts,
                                       seed=7))
        result = sweep(corpus, [0.05], [3],
                       [("htpe_x", "htpe_y", "hc"), ("audio",)])
        dynamic = result.mean_accuracy(blocks="htpe_x+htpe_y+hc")
        audio = result.mean_accuracy(blocks="audio")
        assert dynamic > audio

    def test_csv_report(self, corpus, tmp_path):
        result = sweep(corpus, [0.05], [3], [("cld",)])
        path = tmp_path / "sweep.csv"
        write_sweep_csv(result, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "s,m,blocks,fold,accuracy,status"
        assert len(lines) == 1 + len(result.rows)

    def test_confusion_csv(self, corpus, tmp_path):
        fold = cross_validate(corpus, EvalConfig(m=3, seed=0))[0]
        path = tmp_path / "confusion.csv"
        write_confusion_csv(fold, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + len(fold.activities)


class TestCoarsen:
    def test_group_one_is_identity(self, corpus):
        assert coarsen_corpus(corpus, 0.05)[0] is corpus[0]

    def test_merging_reduces_segments(self, corpus):
        coarse = coarsen_corpus(corpus, 0.25)
        assert len(coarse[0].segments) < len(corpus[0].segments)
        # frame span preserved
        assert coarse[0].segments[0].start_frame == corpus[0].segments[0].start_frame
        assert coarse[0].segments[-1].end_frame == corpus[0].segments[-1].end_frame
