"""Answerability fields over procedural indoor scenes.

A question asked of a scene is easier to answer from some places than
others. This package builds that idea end to end, all on numpy: scenes
and navigation grids, a panoramic visibility oracle, templated QA with
a deterministic answerability score, per-cell fields rendered to and
from RGB rasters, and a small conditional diffusion model trained to
predict the field for unseen scene/question pairs.
"""

from .diffusion import (
    DiffusionModel,
    GuidanceScales,
    NoiseSchedule,
    cfg_predict,
    forward_noise,
    question_tokens,
    sample,
    token_vocab_size,
    train_step,
)
from .fields import (
    Field,
    FieldRaster,
    best_viewpoint,
    box_smooth,
    compute_field,
    decode_field,
    encode_raster,
    grid_transform,
    load_raster,
    normalize,
    read_ppm,
    render_topdown,
    save_raster,
    viewpoint_cell,
    write_ppm,
)
from .qa import (
    Question,
    RankedAnswers,
    answerability,
    generate_questions,
    qa_rank,
    viewing_quality,
)
from .scene import (
    NavGrid,
    Pose,
    Scene,
    SceneConfig,
    SceneObject,
    build_navgrid,
    generate_scene,
    load_vocab,
)
from .visibility import Observation, observe, observe_grid, occluded, panorama

__all__ = [
    "DiffusionModel",
    "Field",
    "FieldRaster",
    "GuidanceScales",
    "NavGrid",
    "NoiseSchedule",
    "Observation",
    "Pose",
    "Question",
    "RankedAnswers",
    "Scene",
    "SceneConfig",
    "SceneObject",
    "answerability",
    "best_viewpoint",
    "box_smooth",
    "build_navgrid",
    "cfg_predict",
    "compute_field",
    "decode_field",
    "encode_raster",
    "forward_noise",
    "generate_questions",
    "generate_scene",
    "grid_transform",
    "load_raster",
    "load_vocab",
    "normalize",
    "observe",
    "observe_grid",
    "occluded",
    "panorama",
    "qa_rank",
    "question_tokens",
    "read_ppm",
    "render_topdown",
    "sample",
    "save_raster",
    "viewpoint_cell",
    "token_vocab_size",
    "train_step",
    "viewing_quality",
    "write_ppm",
]
