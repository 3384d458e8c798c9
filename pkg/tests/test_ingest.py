import numpy as np
import pytest

from adlindex.ingest import (
    AudioTrack,
    GroundTruthTrack,
    LoadError,
    MotionVectorField,
    ValidationError,
    block_matching,
    load_audio,
    load_frames,
    load_labels,
    load_motion_fields,
    save_audio,
    save_motion_fields,
)

from conftest import exhaustive_block_match, shift_image


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.astype(np.uint8).tobytes())


def write_ppm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(img.astype(np.uint8).tobytes())


class TestLoadFrames:
    def test_identity_load(self, tmp_path):
        img = np.full((48, 64), 100, dtype=np.uint8)
        for i in range(10):
            write_pgm(tmp_path / f"{i:04d}.pgm", img)
        seq = load_frames(tmp_path)
        assert seq.width == 64 and seq.height == 48
        assert len(seq) == 10
        assert np.array_equal(seq.frames[0], img)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(LoadError, match="no frames found"):
            load_frames(tmp_path)

    def test_inconsistent_dimensions_names_frame(self, tmp_path):
        for i in range(8):
            shape = (48, 64) if i != 5 else (32, 64)
            write_pgm(tmp_path / f"{i:04d}.pgm", np.zeros(shape, dtype=np.uint8))
        with pytest.raises(LoadError, match="frame 5"):
            load_frames(tmp_path)

    def test_color_frames(self, tmp_path):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:, :, 0] = 200
        write_ppm(tmp_path / "0000.ppm", img)
        seq = load_frames(tmp_path)
        assert seq.frames[0].shape == (16, 16, 3)

    def test_corrupt_frame(self, tmp_path):
        write_pgm(tmp_path / "0000.pgm", np.zeros((8, 8), dtype=np.uint8))
        (tmp_path / "0001.pgm").write_bytes(b"P5\n8 8\n255\n")  # truncated
        with pytest.raises(LoadError):
            load_frames(tmp_path)


class TestBlockMatching:
    def test_known_shift(self, textured_image):
        curr = shift_image(textured_image, 3, 0)
        field = block_matching(textured_image, curr, block_size=16,
                               search_range=4)
        inner = field.vectors[
            (field.vectors[:, 0] > 16) & (field.vectors[:, 0] < 96 - 16)
        ]
        assert np.all(inner[:, 2] == 3)
        assert np.all(inner[:, 3] == 0)

    def test_identity(self, textured_image):
        field = block_matching(textured_image, textured_image)
        assert np.all(field.vectors[:, 2:] == 0)

    def test_uniform_images_tie_break(self):
        img = np.full((32, 32), 77, dtype=np.uint8)
        field = block_matching(img, img, block_size=16, search_range=4)
        assert np.all(field.vectors[:, 2:] == 0)

    def test_too_small_image(self):
        img = np.zeros((8, 8), dtype=np.uint8)
        with pytest.raises(ValidationError):
            block_matching(img, img, block_size=16)

    def test_matches_exhaustive_oracle(self, textured_image):
        rng = np.random.default_rng(7)
        curr = shift_image(textured_image, -2, 1)
        curr = np.clip(curr.astype(int) + rng.integers(-5, 6, curr.shape), 0,
                       255).astype(np.uint8)
        field = block_matching(textured_image, curr, block_size=16,
                               search_range=4)
        oracle = exhaustive_block_match(textured_image, curr, 16, 4)
        assert [tuple(v) for v in field.vectors] == oracle

    def test_deterministic(self, textured_image):
        curr = shift_image(textured_image, 1, -1)
        a = block_matching(textured_image, curr)
        b = block_matching(textured_image, curr)
        assert np.array_equal(a.vectors, b.vectors)


class TestMotionFieldFiles:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        fields = [
            MotionVectorField(frame_index=k, block_size=16,
                              vectors=rng.normal(size=(12, 4)))
            for k in range(1, 4)
        ]
        path = tmp_path / "fields.jsonl"
        save_motion_fields(fields, path)
        loaded = load_motion_fields(path)
        assert len(loaded) == 3
        for orig, back in zip(fields, loaded):
            assert back.frame_index == orig.frame_index
            assert back.block_size == orig.block_size
            assert np.array_equal(back.vectors, orig.vectors)

    def test_corrupt_line(self, tmp_path):
        path = tmp_path / "fields.jsonl"
        path.write_text('{"frame": 1, "block": 16, "v": [[0,0,1,\n')
        with pytest.raises(LoadError, match="invalid JSON"):
            load_motion_fields(path)


class TestLabels:
    def test_two_entries(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,99,tea\n100,199,NR\n")
        track = load_labels(path)
        assert track.entries == ((0, 99, "tea"), (100, 199, "NR"))

    def test_overlap_error(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,99,tea\n50,149,coffee\n")
        with pytest.raises(ValidationError, match="overlap"):
            load_labels(path)

    def test_unknown_activity(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,99,juggling\n")
        with pytest.raises(ValidationError, match="unknown activity"):
            load_labels(path, activities=["tea", "NR"])

    def test_activity_set_requires_reject_class(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,99,tea\n")
        with pytest.raises(ValidationError, match="NR"):
            load_labels(path, activities=["tea"])

    def test_label_at(self):
        track = GroundTruthTrack(entries=((0, 9, "tea"), (20, 29, "coffee")))
        assert track.label_at(5) == "tea"
        assert track.label_at(15) == "NR"


class TestAudio:
    def test_silence_wav(self, tmp_path):
        path = tmp_path / "silence.wav"
        save_audio(AudioTrack(sample_rate=16000, samples=np.zeros(16000)), path)
        track = load_audio(path)
        assert track.sample_rate == 16000
        assert len(track.samples) == 16000
        assert np.all(track.samples == 0.0)

    def test_round_trip_tone(self, tmp_path):
        t = np.arange(8000) / 8000.0
        tone = 0.5 * np.sin(2 * np.pi * 440 * t)
        path = tmp_path / "tone.wav"
        save_audio(AudioTrack(sample_rate=8000, samples=tone), path)
        back = load_audio(path)
        assert np.allclose(back.samples, tone, atol=1.0 / 32768)
