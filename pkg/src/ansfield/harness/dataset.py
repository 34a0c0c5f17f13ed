"""Dataset generation and loading.

On-disk layout (all rasters share one geometry because rooms are fixed):

    scenes/<scene_id>.json
    questions/<scene_id>.json
    rasters/cond/<scene_id>.ppm (+ .meta.json)      top-down render, no scores
    rasters/target/<question_id>.ppm (+ .meta.json) encoded field per ablation
    manifest.json                                   config, splits, checksums

Generation is deterministic: every random stream is derived from
SeedSequence((seed, TAG, split, index)), workers only compute bytes, and
the single writer emits files in a fixed order, so manifests from equal
(seed, config) runs are byte-identical at any thread count.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fields import (
    FieldRaster,
    compute_field,
    encode_raster,
    grid_transform,
    load_raster,
    normalize,
    render_topdown,
)
from ..qa import Question, generate_questions
from ..scene import (
    NavGrid,
    PlacementExhausted,
    Scene,
    build_navgrid,
    generate_scene,
)
from .config import (
    SPLIT_EVAL,
    SPLIT_TRAIN,
    TAG_QUESTIONS,
    TAG_SCENE,
    HarnessConfig,
    config_hash,
)

DATASET_FORMAT_VERSION = 1
_PLACEMENT_ATTEMPTS = 8


class DatasetMismatch(ValueError):
    """Loaded files disagree with the manifest."""


def thread_count() -> int:
    """Worker cap from ANSFIELD_THREADS; defaults to single-threaded."""
    return max(1, int(os.environ.get("ANSFIELD_THREADS", "1")))


def pmap(fn, items):
    """Ordered map, threaded when ANSFIELD_THREADS > 1.

    Results come back in input order either way, so reductions built on
    pmap are reproducible at any worker count.
    """
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class DatasetRecord:
    """One (scene, question) training or eval example."""

    scene_id: str
    question_id: str
    cond: FieldRaster
    target: FieldRaster
    toppoint: bool
    bbox: bool

    def __post_init__(self):
        if (self.cond.width, self.cond.height) != (
            self.target.width,
            self.target.height,
        ):
            raise DatasetMismatch("condition and target raster sizes differ")
        if not np.array_equal(self.cond.transform, self.target.transform):
            raise DatasetMismatch("condition and target transforms differ")


@dataclass
class Dataset:
    root: Path
    config: HarnessConfig
    scenes: dict[str, Scene]
    grids: dict[str, NavGrid]
    questions: dict[str, Question]
    question_scene: dict[str, str]
    train_records: list[DatasetRecord]
    eval_records: list[DatasetRecord]

    def scene_of(self, question_id: str) -> Scene:
        return self.scenes[self.question_scene[question_id]]

    def grid_of(self, question_id: str) -> NavGrid:
        return self.grids[self.question_scene[question_id]]


# ------------------------------------------------------- model arrays

def cond_to_model(raster: FieldRaster) -> np.ndarray:
    """(3, H, W) float64 in [-1, 1] from the RGB condition raster."""
    px = raster.pixels.astype(np.float64)
    return np.transpose(px, (2, 0, 1)) / 127.5 - 1.0


def field_to_model(raster: FieldRaster) -> np.ndarray:
    """(1, H, W) float64 in [-1, 1] from the target raster's R channel.

    The R channel alone carries scores and the TopPoint (and shows BBox
    outlines as zeros), so the generative target is one channel.
    """
    r = raster.pixels[:, :, 0].astype(np.float64)
    return (r / 127.5 - 1.0)[None]


def model_to_field(
    z: np.ndarray, transform: np.ndarray, navmask: np.ndarray
) -> FieldRaster:
    """Quantize a sampled (1, H, W) array back into an R-channel raster."""
    r = np.clip(np.round((np.asarray(z)[0] + 1.0) * 127.5), 0, 255)
    px = np.zeros((*r.shape, 3), dtype=np.uint8)
    px[:, :, 0] = r.astype(np.uint8)
    return FieldRaster(pixels=px, transform=transform, navmask=navmask)


# --------------------------------------------------------- generation

def _scene_for(config: HarnessConfig, split: int, index: int) -> Scene:
    """Deterministic scene draw with a fixed retry ladder.

    Rejection sampling can exhaust placement retries on unlucky seeds;
    walking attempt tags keeps the mapping (seed, split, index) -> scene
    total and reproducible.
    """
    prefix = "train" if split == SPLIT_TRAIN else "eval"
    scfg = config.scene_config()
    for attempt in range(_PLACEMENT_ATTEMPTS):
        try:
            return generate_scene(
                (config.seed, TAG_SCENE, split, index, attempt),
                scfg,
                scene_id=f"{prefix}_{index:04d}",
            )
        except PlacementExhausted:
            continue
    raise PlacementExhausted(
        f"no placeable scene for split {split} index {index} "
        f"after {_PLACEMENT_ATTEMPTS} attempts"
    )


def _ppm_bytes(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _meta_bytes(raster: FieldRaster, question_id: str | None) -> bytes:
    bits = "".join("1" if v else "0" for v in raster.navmask.reshape(-1))
    meta = {
        "transform": [float(v) for v in raster.transform.reshape(-1)],
        "width": raster.width,
        "height": raster.height,
        "navmask": bits,
        "question_id": question_id,
        "grid": None,
    }
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("ascii")


def _scene_payload(args) -> list[tuple[str, bytes]]:
    """All files for one scene as (relative path, bytes), write-ready."""
    config, split, index = args
    scene = _scene_for(config, split, index)
    grid = build_navgrid(scene, config.cell_size, config.wall_buffer)
    questions = generate_questions(
        scene,
        (config.seed, TAG_QUESTIONS, split, index),
        config.questions_per_scene,
        template_weights=config.template_weights,
    )

    t = grid_transform(grid, config.px_per_cell)
    navmask = np.repeat(
        np.repeat(grid.navigable, config.px_per_cell, axis=0),
        config.px_per_cell,
        axis=1,
    )
    cond = FieldRaster(
        pixels=render_topdown(scene, grid, config.px_per_cell),
        transform=t,
        navmask=navmask,
    )

    files: list[tuple[str, bytes]] = [
        (f"scenes/{scene.id}.json", (scene.dumps() + "\n").encode("ascii")),
        (
            f"questions/{scene.id}.json",
            (
                json.dumps(
                    {"scene_id": scene.id, "questions": [q.to_json() for q in questions]},
                    sort_keys=True,
                    indent=1,
                )
                + "\n"
            ).encode("ascii"),
        ),
        (f"rasters/cond/{scene.id}.ppm", _ppm_bytes(cond.pixels)),
        (f"rasters/cond/{scene.id}.meta.json", _meta_bytes(cond, None)),
    ]
    obs_cache: dict = {}
    for q in questions:
        fld = normalize(compute_field(scene, grid, q, config.n_samples, cache=obs_cache))
        raster = encode_raster(
            fld,
            scene,
            q,
            toppoint=config.toppoint,
            bbox=config.bbox,
            px_per_cell=config.px_per_cell,
        )
        files.append((f"rasters/target/{q.id}.ppm", _ppm_bytes(raster.pixels)))
        files.append((f"rasters/target/{q.id}.meta.json", _meta_bytes(raster, q.id)))
    return files


def generate_dataset(out_dir: str | Path, config: HarnessConfig) -> Path:
    """Generate the full benchmark dataset; returns the manifest path."""
    root = Path(out_dir)
    for sub in ("scenes", "questions", "rasters/cond", "rasters/target"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    jobs = [
        (config, split, i)
        for split, n in (
            (SPLIT_TRAIN, config.n_train_scenes),
            (SPLIT_EVAL, config.n_eval_scenes),
        )
        for i in range(n)
    ]
    checksums: dict[str, str] = {}
    for files in pmap(_scene_payload, jobs):
        for relpath, blob in files:
            (root / relpath).write_bytes(blob)
            checksums[relpath] = hashlib.sha256(blob).hexdigest()

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "config": config.to_json(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "splits": {
            "train": [f"train_{i:04d}" for i in range(config.n_train_scenes)],
            "eval": [f"eval_{i:04d}" for i in range(config.n_eval_scenes)],
        },
        "files": dict(sorted(checksums.items())),
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


# ------------------------------------------------------------ loading

def _load_questions(root: Path, scene_id: str) -> list[Question]:
    doc = json.loads((root / "questions" / f"{scene_id}.json").read_text())
    return [Question.from_json(q) for q in doc["questions"]]


def load_dataset(root: str | Path, verify: bool = False) -> Dataset:
    """Rebuild the full Dataset from disk.

    Grids are recomputed from scenes (cheaper than storing them), and
    `verify=True` re-hashes every file against the manifest.
    """
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest["format_version"] != DATASET_FORMAT_VERSION:
        raise DatasetMismatch(
            f"dataset format {manifest['format_version']} != "
            f"{DATASET_FORMAT_VERSION}"
        )
    config = HarnessConfig.from_json(manifest["config"])
    if verify:
        for relpath, want in manifest["files"].items():
            got = hashlib.sha256((root / relpath).read_bytes()).hexdigest()
            if got != want:
                raise DatasetMismatch(f"checksum mismatch for {relpath}")

    scenes: dict[str, Scene] = {}
    grids: dict[str, NavGrid] = {}
    questions: dict[str, Question] = {}
    question_scene: dict[str, str] = {}
    splits: dict[str, list[DatasetRecord]] = {"train": [], "eval": []}

    for split_name in ("train", "eval"):
        for scene_id in manifest["splits"][split_name]:
            scene = Scene.loads((root / "scenes" / f"{scene_id}.json").read_text())
            scenes[scene_id] = scene
            grids[scene_id] = build_navgrid(scene, config.cell_size, config.wall_buffer)
            cond, _ = load_raster(root / "rasters" / "cond" / f"{scene_id}.ppm")
            for q in _load_questions(root, scene_id):
                questions[q.id] = q
                question_scene[q.id] = scene_id
                target, _ = load_raster(root / "rasters" / "target" / f"{q.id}.ppm")
                splits[split_name].append(
                    DatasetRecord(
                        scene_id=scene_id,
                        question_id=q.id,
                        cond=cond,
                        target=target,
                        toppoint=config.toppoint,
                        bbox=config.bbox,
                    )
                )

    return Dataset(
        root=root,
        config=config,
        scenes=scenes,
        grids=grids,
        questions=questions,
        question_scene=question_scene,
        train_records=splits["train"],
        eval_records=splits["eval"],
    )
