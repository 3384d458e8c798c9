"""Command-line pipeline: estimate motion, segment, extract, train,
decode, cross-validate and generate synthetic fixtures."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

try:
    import tomllib as toml_reader
except ImportError:  # python < 3.11
    import tomli as toml_reader

from . import eval as ev
from . import pipeline, synth
from .descriptors import BLOCK_ORDER
from .hhmm import load_model, save_model
from .ingest import load_labels, load_motion_fields, save_motion_fields
from .motion import AffineMotionModel, RobustConfig
from .segmentation import SegmenterConfig, save_segments, segment_video


def _parse_blocks(text: str):
    names = tuple(b.strip() for b in text.split(",") if b.strip())
    for name in names:
        if name not in BLOCK_ORDER:
            raise click.BadParameter(
                f"unknown block {name!r}; choose from {', '.join(BLOCK_ORDER)}"
            )
    return names


def _parse_range(text: str):
    """'0.1' or comma list or 'start:step:stop' (stop inclusive)."""
    if ":" in text:
        start, step, stop = (float(p) for p in text.split(":"))
        values = []
        v = start
        while v <= stop + 1e-12:
            values.append(round(v, 10))
            v += step
        return values
    return [float(p) for p in text.split(",")]


@click.group()
def main():
    """Egocentric-video activity indexing pipeline."""


@main.group()
def motion():
    """Ego-motion estimation commands."""


@motion.command("estimate")
@click.option("--fields", "fields_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--weight", type=click.Choice(["tukey", "huber"]), default="tukey")
def motion_estimate(fields_path, out_path, weight):
    """Fit the per-frame affine model to each motion field."""
    fields = load_motion_fields(fields_path)
    models = pipeline.estimate_models(fields, RobustConfig(weight_function=weight))
    pipeline.save_models(models, out_path)
    click.echo(f"wrote {len(models)} models to {out_path}")


@main.command()
@click.option("--models", "models_path", required=True, type=click.Path(exists=True))
@click.option("--width", required=True, type=int)
@click.option("--height", type=int, default=None)
@click.option("--s", "s", type=float, default=0.2, show_default=True)
@click.option("--min-len", type=int, default=5, show_default=True)
@click.option("--max-len", type=int, default=1000, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def segment(models_path, width, height, s, min_len, max_len, out_path):
    """Cut the video into viewpoint segments."""
    models = pipeline.load_models(models_path)
    cfg = SegmenterConfig(s=s, min_len=min_len, max_len=max_len)
    segments = segment_video(models, width, cfg, height=height)
    save_segments(segments, out_path)
    click.echo(f"wrote {len(segments)} segments to {out_path}")


@main.command()
@click.option("--frames", "frames_dir", type=click.Path(exists=True), default=None)
@click.option("--models", "models_path", type=click.Path(exists=True), default=None)
@click.option("--segments", "segments_path", type=click.Path(exists=True), default=None)
@click.option("--audio", "audio_path", type=click.Path(exists=True), default=None)
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--fps", type=float, default=30.0, show_default=True)
@click.option("--s", type=float, default=0.2, show_default=True)
@click.option("--video-id", default="video", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def extract(frames_dir, models_path, segments_path, audio_path, width, height,
            fps, s, video_id, out_path):
    """Extract per-segment descriptor blocks to a features file."""
    from .ingest import load_audio, load_frames
    from .segmentation import load_segments

    frames = load_frames(frames_dir, fps=fps) if frames_dir else None
    if frames is not None:
        width, height = frames.width, frames.height
    if width is None:
        raise click.UsageError("pass --width when no frame directory is given")
    if height is None:
        height = (width * 3) // 4
    if models_path:
        models = pipeline.load_models(models_path)
    elif frames is not None:
        models = pipeline.estimate_models(pipeline.fields_from_frames(frames))
    else:
        raise click.UsageError("need --models or --frames")
    if segments_path:
        segments = load_segments(segments_path)
    else:
        segments = segment_video(models, width, SegmenterConfig(s=s),
                                 height=height)
    audio = load_audio(audio_path) if audio_path else None
    blocks = pipeline.extract_segment_blocks(segments, models, width, height,
                                             frames=frames, audio=audio, fps=fps)
    from .ingest import GroundTruthTrack

    record = ev.VideoRecord(video_id=video_id, segments=tuple(segments),
                            blocks=tuple(blocks),
                            labels=GroundTruthTrack(entries=()))
    pipeline.save_features(record, out_path)
    click.echo(f"wrote {len(blocks)} feature records to {out_path}")


@main.command()
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True), multiple=True)
@click.option("--labels", "labels_path", required=True,
              type=click.Path(exists=True), multiple=True)
@click.option("--m", type=int, default=3, show_default=True)
@click.option("--g", "n_components", type=int, default=1, show_default=True)
@click.option("--blocks", default=",".join(BLOCK_ORDER), show_default=True)
@click.option("--top", type=click.Choice(["bigram", "uniform"]), default="bigram")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train(features_path, labels_path, m, n_components, blocks, top, seed,
          out_path):
    """Train the hierarchical model on one or more labeled videos."""
    if len(features_path) != len(labels_path):
        raise click.UsageError("give one --labels per --features")
    records = []
    for i, (fp, lp) in enumerate(zip(features_path, labels_path)):
        records.append(pipeline.load_features(fp, video_id=f"v{i}",
                                              labels=load_labels(lp)))
    config = ev.EvalConfig(m=m, n_components=n_components,
                           blocks=_parse_blocks(blocks), top_mode=top,
                           seed=seed)
    model = ev.train_model(records, config)
    save_model(model, out_path)
    click.echo(f"wrote model with {len(model.activities)} activities "
               f"to {out_path}")


@main.command()
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True))
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def decode(features_path, model_path, out_path):
    """Decode a features file into a per-segment activity timeline."""
    record = pipeline.load_features(features_path)
    model = load_model(model_path)
    labels, score = ev.decode_video(model, record)
    with open(out_path, "w") as fh:
        fh.write("start,end,activity\n")
        for seg, label in zip(record.segments, labels):
            fh.write(f"{seg.start_frame},{seg.end_frame},{label}\n")
    click.echo(f"decoded {len(labels)} segments (log-prob {score:.3f}) "
               f"to {out_path}")


@main.command()
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True))
@click.option("--s", "s_text", default="0.05", show_default=True,
              help="value, comma list, or start:step:stop")
@click.option("--m", "m_text", default="3", show_default=True)
@click.option("--blocks", "blocks_text", default=",".join(BLOCK_ORDER),
              show_default=True, help="semicolon-separated block sets")
@click.option("--g", "n_components", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--svg/--no-svg", default=False, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def crossval(corpus_path, s_text, m_text, blocks_text, n_components, seed,
             svg, out_dir):
    """Leave-one-video-out sweep over s, m and descriptor configurations."""
    corpus = pipeline.load_corpus(corpus_path)
    s_values = _parse_range(s_text)
    m_values = [int(v) for v in m_text.split(",")]
    configs = [_parse_blocks(part) for part in blocks_text.split(";")]
    base = ev.EvalConfig(n_components=n_components, seed=seed)
    result = ev.sweep(corpus, s_values, m_values, configs, base_config=base)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ev.write_sweep_csv(result, out / "sweep.csv")
    # per-fold confusion matrices for the first grid cell
    first = ev.cross_validate(
        ev.coarsen_corpus(corpus, s_values[0]),
        ev.EvalConfig(m=m_values[0], blocks=tuple(configs[0]),
                      n_components=n_components, seed=seed))
    for fold in first:
        if not fold.failed:
            ev.write_confusion_csv(
                fold, out / f"confusion_{fold.held_out_video}.csv")
    if svg:
        ev.plot_sweep_curves(result, out / "curves.svg")
    click.echo(f"wrote {len(result.rows)} sweep rows to {out / 'sweep.csv'}")


@main.group("synth")
def synth_group():
    """Synthetic fixture generators."""


@synth_group.command("motion")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_motion(spec_path, out_path):
    """Generate a motion-field file from a TOML spec."""
    with open(spec_path, "rb") as fh:
        doc = toml_reader.load(fh)
    spec = synth.MotionFieldSpec(
        model=AffineMotionModel.from_params(doc.get("a", [0.0] * 6)),
        width=int(doc.get("width", 640)),
        height=int(doc.get("height", 480)),
        block_size=int(doc.get("block_size", 16)),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        outlier_fraction=float(doc.get("outlier_fraction", 0.0)),
        seed=int(doc.get("seed", 0)),
    )
    n_frames = int(doc.get("frames", 1))
    fields = [synth.gen_motion_field(
        synth.MotionFieldSpec(**{**spec.__dict__, "seed": spec.seed + k}),
        frame_index=k + 1) for k in range(n_frames)]
    save_motion_fields(fields, out_path)
    click.echo(f"wrote {n_frames} motion fields to {out_path}")


@synth_group.command("sequence")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--length", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_sequence(model_path, length, seed, out_path):
    """Sample an observation sequence from a saved hierarchical model."""
    model = load_model(model_path)
    obs, path = synth.gen_hhmm_sequence(model, length, seed=seed)
    with open(out_path, "w") as fh:
        for o, (activity, substate) in zip(obs, path):
            fh.write(json.dumps({"activity": activity, "substate": substate,
                                 "o": [float(v) for v in o]},
                                sort_keys=True) + "\n")
    click.echo(f"wrote {length} observations to {out_path}")


@synth_group.command("corpus")
@click.option("--activities", type=int, default=6, show_default=True)
@click.option("--videos", type=int, default=6, show_default=True)
@click.option("--segments-per-run", type=int, default=8, show_default=True)
@click.option("--separation", type=float, default=4.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_corpus(activities, videos, segments_per_run, separation, seed,
                 out_dir):
    """Generate a separable feature-level corpus with manifest."""
    spec = synth.separable_corpus_spec(
        n_activities=activities, n_videos=videos,
        segments_per_run=segments_per_run, separation=separation, seed=seed)
    records = synth.gen_corpus(spec, out_dir)
    click.echo(f"wrote {len(records)}-video corpus to {out_dir}")


if __name__ == "__main__":
    main()
