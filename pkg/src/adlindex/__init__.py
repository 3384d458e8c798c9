"""Indexing of wearable-camera recordings into activities of daily living.

Pipeline stages: affine ego-motion estimation from block motion vectors,
corner-trajectory viewpoint segmentation, multimodal per-segment
descriptors (motion, color layout, audio), and a two-level hierarchical
HMM with GMM emissions for activity labeling.
"""

from .ingest import (
    AudioTrack,
    FrameSequence,
    GroundTruthTrack,
    MotionVectorField,
    block_matching,
    load_audio,
    load_frames,
    load_labels,
    load_motion_fields,
    save_motion_fields,
)
from .motion import AffineMotionModel, RobustConfig, apply_model, estimate_affine
from .segmentation import Segment, SegmenterConfig, propagate_corners, segment_video
from .descriptors import (
    BLOCK_ORDER,
    BLOCK_SIZES,
    Normalizer,
    ObservationVector,
    audio_features,
    cld,
    cut_histogram,
    cut_histogram_segment,
    fuse,
    htpe_bin,
    htpe_segment,
)
from .hhmm import (
    ActivityHMM,
    CompositeHMM,
    GaussianMixture,
    HierarchicalHMM,
    baum_welch,
    estimate_top_transitions,
    flatten,
    init_activity_hmm,
    load_model,
    save_model,
    viterbi,
)
from .eval import (
    EvalConfig,
    FoldResult,
    SweepResult,
    VideoRecord,
    cross_validate,
    ground_truth_for_segment,
    sweep,
)
from .synth import (
    CorpusSpec,
    MotionFieldSpec,
    gen_corpus,
    gen_hhmm_sequence,
    gen_motion_field,
    separable_corpus_spec,
)

__version__ = "0.1.0"
