"""Procedural 2D indoor scenes and the navigable grid over them.

A scene is an axis-aligned floorplan: a rectangular room, zero or more
internal partition walls (zero-thickness segments), and rectangular
object footprints carrying category / color attributes. All lengths are
meters. Scenes, grids and poses are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geometry import (
    Rect,
    point_segment_distance,
    rect_contains,
    rects_overlap,
    segments_cross,
)

SCENE_SCHEMA_VERSION = 1


class PlacementExhausted(RuntimeError):
    """Object placement ran out of retries; the config is too dense."""


class NoNavigableCell(RuntimeError):
    """Every grid cell is blocked by footprints, walls or bounds."""


def load_vocab() -> dict:
    with resources.files("ansfield.data").joinpath("vocab.json").open() as f:
        return json.load(f)


_VOCAB = load_vocab()
CATEGORIES: tuple[str, ...] = tuple(_VOCAB["categories"])
COLORS: tuple[str, ...] = tuple(_VOCAB["colors"])


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: str
    color: str
    footprint: Rect  # (x0, y0, x1, y1), meters
    side_visible: bool  # color readable only from agent height, not top-down

    def __post_init__(self):
        x0, y0, x1, y1 = self.footprint
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate footprint for {self.id}: {self.footprint}")

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.footprint
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass(frozen=True)
class Pose:
    """Agent position; panoramas are full 360 degrees so there is no heading."""

    x: float
    y: float


@dataclass(frozen=True)
class Scene:
    id: str
    width: float
    height: float
    walls: tuple[tuple[float, float, float, float], ...]  # (ax, ay, bx, by)
    objects: tuple[SceneObject, ...]

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("scene bounds must be positive")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        bounds: Rect = (0.0, 0.0, self.width, self.height)
        for ax, ay, bx, by in self.walls:
            if not (rect_contains(bounds, ax, ay) and rect_contains(bounds, bx, by)):
                raise ValueError("wall endpoint outside scene bounds")
        for o in self.objects:
            x0, y0, x1, y1 = o.footprint
            if not (rect_contains(bounds, x0, y0) and rect_contains(bounds, x1, y1)):
                raise ValueError(f"footprint of {o.id} outside scene bounds")
        for i, a in enumerate(self.objects):
            for b in self.objects[i + 1 :]:
                if rects_overlap(a.footprint, b.footprint):
                    raise ValueError(f"footprints overlap: {a.id}, {b.id}")
            for wall in self.walls:
                if _wall_hits_rect(wall, a.footprint):
                    raise ValueError(f"wall intersects footprint of {a.id}")

    def object_by_id(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def objects_sorted(self) -> tuple[SceneObject, ...]:
        return tuple(sorted(self.objects, key=lambda o: o.id))

    def to_json(self) -> dict:
        return {
            "schema_version": SCENE_SCHEMA_VERSION,
            "units": "meters",
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "walls": [list(w) for w in self.walls],
            "objects": [
                {
                    "id": o.id,
                    "category": o.category,
                    "color": o.color,
                    "footprint": list(o.footprint),
                    "side_visible": o.side_visible,
                }
                for o in self.objects
            ],
        }

    @staticmethod
    def from_json(doc: dict) -> "Scene":
        if doc.get("schema_version") != SCENE_SCHEMA_VERSION:
            raise ValueError(f"unsupported scene schema: {doc.get('schema_version')}")
        return Scene(
            id=doc["id"],
            width=float(doc["width"]),
            height=float(doc["height"]),
            walls=tuple(tuple(float(v) for v in w) for w in doc["walls"]),
            objects=tuple(
                SceneObject(
                    id=obj["id"],
                    category=obj["category"],
                    color=obj["color"],
                    footprint=tuple(float(v) for v in obj["footprint"]),
                    side_visible=bool(obj["side_visible"]),
                )
                for obj in doc["objects"]
            ),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def loads(text: str) -> "Scene":
        return Scene.from_json(json.loads(text))


@dataclass(frozen=True)
class NavGrid:
    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int
    navigable: np.ndarray  # bool (ny, nx), row-major over (iy, ix)

    def __post_init__(self):
        nav = np.asarray(self.navigable, dtype=bool)
        if nav.shape != (self.ny, self.nx):
            raise ValueError("navigable mask shape must be (ny, nx)")
        nav.setflags(write=False)
        object.__setattr__(self, "navigable", nav)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (ix + 0.5) * self.cell_size, oy + (iy + 0.5) * self.cell_size)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.origin
        ix = int(math.floor((x - ox) / self.cell_size))
        iy = int(math.floor((y - oy) / self.cell_size))
        return ix, iy

    def navigable_cells(self) -> list[tuple[int, int]]:
        """(ix, iy) pairs in row-major (iy, then ix) order."""
        ys, xs = np.nonzero(self.navigable)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def navigable_centers(self) -> np.ndarray:
        """Centers of navigable cells, (N,2), row-major cell order."""
        cells = self.navigable_cells()
        return np.array([self.cell_center(ix, iy) for ix, iy in cells], dtype=np.float64)

    def to_json(self) -> dict:
        bits = "".join(
            "1" if self.navigable[iy, ix] else "0"
            for iy in range(self.ny)
            for ix in range(self.nx)
        )
        return {
            "origin": list(self.origin),
            "cell_size": self.cell_size,
            "nx": self.nx,
            "ny": self.ny,
            "navigable": bits,
        }

    @staticmethod
    def from_json(doc: dict) -> "NavGrid":
        nx, ny = int(doc["nx"]), int(doc["ny"])
        bits = doc["navigable"]
        if len(bits) != nx * ny:
            raise ValueError("navigable bitstring length mismatch")
        nav = np.array([c == "1" for c in bits], dtype=bool).reshape(ny, nx)
        return NavGrid(
            origin=tuple(float(v) for v in doc["origin"]),
            cell_size=float(doc["cell_size"]),
            nx=nx,
            ny=ny,
            navigable=nav,
        )


@dataclass(frozen=True)
class SceneConfig:
    width_range: tuple[float, float] = (4.0, 8.0)
    height_range: tuple[float, float] = (4.0, 8.0)
    n_objects_range: tuple[int, int] = (3, 7)
    n_partitions_range: tuple[int, int] = (0, 2)
    object_size_range: tuple[float, float] = (0.4, 1.2)
    partition_length_frac: tuple[float, float] = (0.3, 0.6)
    edge_margin: float = 0.2  # keep footprints off the room boundary
    side_visible_prob: float = 0.5
    categories: tuple[str, ...] = CATEGORIES
    colors: tuple[str, ...] = COLORS
    placement_retries: int = 1000

    def to_json(self) -> dict:
        return {
            "width_range": list(self.width_range),
            "height_range": list(self.height_range),
            "n_objects_range": list(self.n_objects_range),
            "n_partitions_range": list(self.n_partitions_range),
            "object_size_range": list(self.object_size_range),
            "partition_length_frac": list(self.partition_length_frac),
            "edge_margin": self.edge_margin,
            "side_visible_prob": self.side_visible_prob,
            "categories": list(self.categories),
            "colors": list(self.colors),
            "placement_retries": self.placement_retries,
        }

    @staticmethod
    def from_json(doc: dict) -> "SceneConfig":
        kwargs = {}
        for key in (
            "width_range",
            "height_range",
            "n_objects_range",
            "n_partitions_range",
            "object_size_range",
            "partition_length_frac",
        ):
            if key in doc:
                kwargs[key] = tuple(doc[key])
        for key in ("edge_margin", "side_visible_prob", "placement_retries"):
            if key in doc:
                kwargs[key] = doc[key]
        for key in ("categories", "colors"):
            if key in doc:
                kwargs[key] = tuple(doc[key])
        return SceneConfig(**kwargs)


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo + (hi - lo) * rng.random())


def _randint(rng: np.random.Generator, lo: int, hi: int) -> int:
    """Inclusive integer draw."""
    return int(rng.integers(lo, hi + 1))


def generate_scene(seed, config: SceneConfig = SceneConfig(), scene_id: str | None = None) -> Scene:
    """Deterministic procedural scene from (seed, config).

    `seed` is anything np.random.SeedSequence accepts as entropy: an int
    or a tuple of ints (handy for derived streams like (run, index)).

    Partitions are laid first; objects are rejection-sampled against the
    partitions and each other. Raises PlacementExhausted when an object
    cannot be placed within config.placement_retries attempts.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    width = _uniform(rng, *config.width_range)
    height = _uniform(rng, *config.height_range)

    walls: list[tuple[float, float, float, float]] = []
    n_partitions = _randint(rng, *config.n_partitions_range)
    for _ in range(n_partitions):
        horizontal = rng.random() < 0.5
        frac = _uniform(rng, *config.partition_length_frac)
        if horizontal:
            length = frac * width
            y = _uniform(rng, 0.5, height - 0.5)
            # Anchor on the left or right boundary.
            if rng.random() < 0.5:
                walls.append((0.0, y, length, y))
            else:
                walls.append((width - length, y, width, y))
        else:
            length = frac * height
            x = _uniform(rng, 0.5, width - 0.5)
            if rng.random() < 0.5:
                walls.append((x, 0.0, x, length))
            else:
                walls.append((x, height - length, x, height))

    objects: list[SceneObject] = []
    n_objects = _randint(rng, *config.n_objects_range)
    margin = config.edge_margin
    for i in range(n_objects):
        placed = False
        for _ in range(config.placement_retries):
            w = _uniform(rng, *config.object_size_range)
            h = _uniform(rng, *config.object_size_range)
            if w >= width - 2 * margin or h >= height - 2 * margin:
                continue
            x0 = _uniform(rng, margin, width - margin - w)
            y0 = _uniform(rng, margin, height - margin - h)
            cand: Rect = (x0, y0, x0 + w, y0 + h)
            if any(rects_overlap(cand, o.footprint) for o in objects):
                continue
            if any(_wall_hits_rect(wall, cand) for wall in walls):
                continue
            category = config.categories[int(rng.integers(len(config.categories)))]
            color = config.colors[int(rng.integers(len(config.colors)))]
            side_visible = bool(rng.random() < config.side_visible_prob)
            objects.append(
                SceneObject(
                    id=f"obj_{i:02d}",
                    category=category,
                    color=color,
                    footprint=cand,
                    side_visible=side_visible,
                )
            )
            placed = True
            break
        if not placed:
            raise PlacementExhausted(
                f"could not place object {i} after {config.placement_retries} tries"
            )

    if scene_id is None:
        parts = seed if isinstance(seed, (tuple, list)) else (seed,)
        scene_id = "scene_" + "_".join(str(p) for p in parts)
    return Scene(
        id=scene_id,
        width=width,
        height=height,
        walls=tuple(walls),
        objects=tuple(objects),
    )


def _wall_hits_rect(wall: tuple[float, float, float, float], rect: Rect) -> bool:
    """Wall segment touching the closed rectangle counts as a hit."""
    ax, ay, bx, by = wall
    if rect_contains(rect, ax, ay) or rect_contains(rect, bx, by):
        return True
    x0, y0, x1, y1 = rect
    edges = (
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    )
    return any(segments_cross((ax, ay), (bx, by), e0, e1) for e0, e1 in edges)


def build_navgrid(scene: Scene, cell_size: float = 0.25, wall_buffer: float = 0.1) -> NavGrid:
    """Grid covering the scene; a cell is navigable iff its center is
    inside the bounds, strictly outside every footprint, and at least
    wall_buffer away from every wall segment.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if wall_buffer < 0:
        raise ValueError("wall_buffer must be non-negative")
    nx = max(1, int(math.ceil(scene.width / cell_size - 1e-9)))
    ny = max(1, int(math.ceil(scene.height / cell_size - 1e-9)))
    nav = np.zeros((ny, nx), dtype=bool)
    for iy in range(ny):
        cy = (iy + 0.5) * cell_size
        for ix in range(nx):
            cx = (ix + 0.5) * cell_size
            if cx > scene.width or cy > scene.height:
                continue
            if any(rect_contains(o.footprint, cx, cy) for o in scene.objects):
                continue
            if any(
                point_segment_distance(cx, cy, ((w[0], w[1]), (w[2], w[3])))
                < wall_buffer
                for w in scene.walls
            ):
                continue
            nav[iy, ix] = True
    if not nav.any():
        raise NoNavigableCell(
            f"no navigable cell in scene {scene.id} at cell_size={cell_size}"
        )
    return NavGrid(origin=(0.0, 0.0), cell_size=cell_size, nx=nx, ny=ny, navigable=nav)
