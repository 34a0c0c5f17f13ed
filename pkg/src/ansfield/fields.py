"""Answerability fields over navgrids and their RGB raster form.

A field holds one score per navigable cell. Rasters encode scores in the
R channel of a top-down render (px_per_cell pixels per grid cell), with
optional annotations: the argmax cell painted pure red (TopPoint) and
referenced footprint outlines in pure blue (BBox). The affine transform
from scene meters to pixel coordinates travels with the raster so poses
can round-trip through pixel space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .qa import THETA_CUT, THETA_HI, THETA_LO, Question, viewing_quality
from .scene import NavGrid, Pose, Scene
from .visibility import DEFAULT_BOUNDARY_SAMPLES, observe_grid

FLOOR_RGB = (224, 224, 224)
OBJECT_RGB = (128, 128, 128)
WALL_RGB = (64, 64, 64)
TOPPOINT_RGB = (255, 0, 0)
BBOX_RGB = (0, 0, 255)
DEFAULT_PX_PER_CELL = 2


class TransformMismatch(ValueError):
    pass


class EmptyNavmask(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    """Scores on the navigable cells of a grid.

    scores is a dense (ny, nx) array; non-navigable cells are fixed at 0
    and excluded from every reduction.
    """

    grid: NavGrid
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (self.grid.ny, self.grid.nx):
            raise ValueError("scores shape must match grid (ny, nx)")
        nav = self.grid.navigable
        if np.any(s[nav] < 0.0) or np.any(s[nav] > 1.0):
            raise ValueError("navigable scores must lie in [0, 1]")
        s = np.where(nav, s, 0.0)
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def max_score(self) -> float:
        nav = self.grid.navigable
        return float(self.scores[nav].max()) if nav.any() else 0.0

    def argmax_cell(self) -> tuple[int, int]:
        """(ix, iy) of the best navigable cell; row-major ties -> first."""
        nav = self.grid.navigable
        if not nav.any():
            raise EmptyNavmask("field has no navigable cells")
        masked = np.where(nav, self.scores, -1.0)
        flat = int(np.argmax(masked))
        iy, ix = divmod(flat, self.grid.nx)
        return ix, iy


@dataclass(frozen=True)
class FieldRaster:
    """RGB image + scene->pixel affine transform + per-pixel navmask."""

    pixels: np.ndarray  # (H, W, 3) uint8
    transform: np.ndarray  # (2, 3) float64
    navmask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be (H, W, 3)")
        t = np.asarray(self.transform, dtype=np.float64)
        if t.shape != (2, 3):
            raise ValueError("transform must be 2x3")
        if abs(t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]) < 1e-12:
            raise ValueError("transform linear part must be invertible")
        nm = np.asarray(self.navmask, dtype=bool)
        if nm.shape != px.shape[:2]:
            raise ValueError("navmask shape must match pixels")
        for arr, name in ((px, "pixels"), (t, "transform"), (nm, "navmask")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def grid_transform(grid: NavGrid, px_per_cell: int) -> np.ndarray:
    """Affine scene meters -> pixel coords; pixel (0,0) covers the cell
    at the grid origin (row index grows with +y)."""
    s = px_per_cell / grid.cell_size
    ox, oy = grid.origin
    return np.array([[s, 0.0, -ox * s], [0.0, s, -oy * s]], dtype=np.float64)


def transform_apply(t: np.ndarray, xy: np.ndarray) -> np.ndarray:
    xy = np.asarray(xy, dtype=np.float64)
    return xy @ t[:, :2].T + t[:, 2]


def transform_invert(t: np.ndarray, pq: np.ndarray) -> np.ndarray:
    pq = np.asarray(pq, dtype=np.float64)
    inv = np.linalg.inv(t[:, :2])
    return (pq - t[:, 2]) @ inv.T


def compute_field(
    scene: Scene,
    grid: NavGrid,
    question: Question,
    n_samples: int = DEFAULT_BOUNDARY_SAMPLES,
    theta_lo: float = THETA_LO,
    theta_hi: float = THETA_HI,
    theta_cut: float = THETA_CUT,
    cache: dict | None = None,
) -> Field:
    """Answerability at every navigable cell center.

    Evaluates each referenced object over all centers in one vectorized
    pass; the product across objects is the per-cell score. Cell order
    cannot affect the result (pure elementwise arithmetic).

    `cache` memoizes per-object (fractions, extents) across the many
    questions that reference the same object; it is only valid for one
    (scene, grid, n_samples) combination, so callers own its scoping.
    """
    centers = grid.navigable_centers()
    if len(centers) == 0:
        return Field(grid=grid, scores=np.zeros((grid.ny, grid.nx)))
    prod = np.ones(len(centers), dtype=np.float64)
    for oid in question.referenced_ids:
        if cache is not None and oid in cache:
            fractions, extents = cache[oid]
        else:
            fractions, extents, _ = observe_grid(scene, centers, oid, n_samples)
            if cache is not None:
                cache[oid] = (fractions, extents)
        prod *= fractions * viewing_quality(extents, theta_lo, theta_hi, theta_cut)
    scores = np.zeros((grid.ny, grid.nx), dtype=np.float64)
    for (ix, iy), v in zip(grid.navigable_cells(), prod):
        scores[iy, ix] = v
    return Field(grid=grid, scores=scores)


def normalize(field: Field) -> Field:
    """Scale so the max navigable score is 1; all-zero stays all-zero."""
    m = field.max_score()
    if m <= 0.0:
        return field
    return Field(grid=field.grid, scores=field.scores / m)


def render_topdown(scene: Scene, grid: NavGrid, px_per_cell: int = DEFAULT_PX_PER_CELL) -> np.ndarray:
    """Background render: floor, object footprints, walls (three grays).

    A pixel is an object pixel when its center lies in a footprint, and a
    wall pixel when its center is within half a pixel of a wall segment.
    """
    h, w = grid.ny * px_per_cell, grid.nx * px_per_cell
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = FLOOR_RGB

    t = grid_transform(grid, px_per_cell)
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    centers_px = np.stack([cols + 0.5, rows + 0.5], axis=-1).reshape(-1, 2)
    centers = transform_invert(t, centers_px)
    x, y = centers[:, 0], centers[:, 1]

    obj_mask = np.zeros(len(centers), dtype=bool)
    for o in scene.objects:
        x0, y0, x1, y1 = o.footprint
        obj_mask |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    img.reshape(-1, 3)[obj_mask] = OBJECT_RGB

    half_px = 0.5 * grid.cell_size / px_per_cell
    wall_mask = np.zeros(len(centers), dtype=bool)
    for ax, ay, bx, by in scene.walls:
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        if L2 == 0.0:
            d = np.hypot(x - ax, y - ay)
        else:
            u = np.clip(((x - ax) * dx + (y - ay) * dy) / L2, 0.0, 1.0)
            d = np.hypot(x - (ax + u * dx), y - (ay + u * dy))
        wall_mask |= d <= half_px
    img.reshape(-1, 3)[wall_mask] = WALL_RGB
    return img


def encode_raster(
    field: Field,
    scene: Scene,
    question: Question,
    toppoint: bool = False,
    bbox: bool = False,
    px_per_cell: int = DEFAULT_PX_PER_CELL,
) -> FieldRaster:
    """Paint scores into R over the top-down render, then annotations.

    Layer order is scores, BBox, TopPoint, so the red argmax marker is
    never overdrawn. Blue outlines deliberately clobber score pixels —
    decoders must live with that measurement noise. Callers normalize
    the field first when they want the full R range used.
    """
    grid = field.grid
    p = px_per_cell
    img = render_topdown(scene, grid, p)

    for (ix, iy) in grid.navigable_cells():
        r = int(round(255.0 * field.scores[iy, ix]))
        img[iy * p : (iy + 1) * p, ix * p : (ix + 1) * p] = (r, 0, 0)

    t = grid_transform(grid, p)
    if bbox:
        for oid in question.referenced_ids:
            _draw_outline(img, t, scene.object_by_id(oid).footprint)
    if toppoint:
        ix, iy = field.argmax_cell()
        img[iy * p : (iy + 1) * p, ix * p : (ix + 1) * p] = TOPPOINT_RGB

    navmask = np.repeat(np.repeat(grid.navigable, p, axis=0), p, axis=1)
    return FieldRaster(pixels=img, transform=t, navmask=navmask)


def _draw_outline(img: np.ndarray, t: np.ndarray, rect) -> None:
    h, w = img.shape[:2]
    corners = transform_apply(t, np.array([[rect[0], rect[1]], [rect[2], rect[3]]]))
    c0 = int(np.clip(math.floor(corners[0, 0]), 0, w - 1))
    r0 = int(np.clip(math.floor(corners[0, 1]), 0, h - 1))
    c1 = int(np.clip(math.ceil(corners[1, 0]) - 1, 0, w - 1))
    r1 = int(np.clip(math.ceil(corners[1, 1]) - 1, 0, h - 1))
    img[r0, c0 : c1 + 1] = BBOX_RGB
    img[r1, c0 : c1 + 1] = BBOX_RGB
    img[r0 : r1 + 1, c0] = BBOX_RGB
    img[r0 : r1 + 1, c1] = BBOX_RGB


def decode_field(raster: FieldRaster, grid: NavGrid) -> Field:
    """Mean R over each navigable cell's navmask pixels, / 255.

    Annotation pixels are not special-cased: TopPoint blocks decode to
    1.0 and BBox pixels contribute 0 — the same corruption a model
    trained on annotated rasters sees.
    """
    if raster.width % grid.nx or raster.height % grid.ny:
        raise TransformMismatch("raster size is not a multiple of the grid")
    p = raster.width // grid.nx
    if raster.height // grid.ny != p:
        raise TransformMismatch("anisotropic pixel blocks")
    expected = grid_transform(grid, p)
    if not np.allclose(expected, raster.transform, atol=1e-9):
        raise TransformMismatch("raster transform does not match grid")

    r_chan = raster.pixels[:, :, 0].astype(np.float64)
    scores = np.zeros((grid.ny, grid.nx), dtype=np.float64)
    for (ix, iy) in grid.navigable_cells():
        block_r = r_chan[iy * p : (iy + 1) * p, ix * p : (ix + 1) * p]
        block_m = raster.navmask[iy * p : (iy + 1) * p, ix * p : (ix + 1) * p]
        if block_m.any():
            scores[iy, ix] = block_r[block_m].mean() / 255.0
    return Field(grid=grid, scores=scores)


def box_smooth(field: Field) -> Field:
    """Average each navigable cell with its navigable 3x3 neighbours.

    Sampled fields keep per-draw speckle at the cell scale even after
    averaging several draws; one box pass suppresses it without moving
    plateau maxima. Non-navigable cells contribute nothing and stay 0.
    """
    nav = field.grid.navigable
    vals = np.where(nav, field.scores, 0.0)
    ny, nx = vals.shape
    num = np.zeros((ny, nx))
    cnt = np.zeros((ny, nx))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            src = (slice(max(0, dy), ny + min(0, dy)), slice(max(0, dx), nx + min(0, dx)))
            dst = (slice(max(0, -dy), ny + min(0, -dy)), slice(max(0, -dx), nx + min(0, -dx)))
            num[dst] += vals[src]
            cnt[dst] += nav[src]
    return Field(grid=field.grid, scores=np.where(nav, num / np.maximum(cnt, 1.0), 0.0))


def viewpoint_cell(field: Field) -> tuple[int, int]:
    """(ix, iy) of the best cell to stand in, by score with a mild
    interior preference.

    Averaged or smoothed fields are plateau-heavy, and a plateau corner
    pressed against a wall or a footprint makes a worse vantage point
    than an open cell of nearly the same score — so cells whose whole
    3x3 neighbourhood is navigable get a 1.25x bonus. That breaks
    plateau near-ties toward open space without overriding genuinely
    higher scores. Exact ties resolve to the lowest row-major cell.
    """
    nav = field.grid.navigable
    ny, nx = nav.shape
    cnt = np.zeros((ny, nx))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            src = (slice(max(0, dy), ny + min(0, dy)), slice(max(0, dx), nx + min(0, dx)))
            dst = (slice(max(0, -dy), ny + min(0, -dy)), slice(max(0, -dx), nx + min(0, -dx)))
            cnt[dst] += nav[src]
    weighted = np.where(nav, field.scores * (1.0 + 0.25 * (cnt == 9)), -1.0)
    iy, ix = np.unravel_index(int(np.argmax(weighted)), weighted.shape)
    return int(ix), int(iy)


def best_viewpoint(raster: FieldRaster, grid: NavGrid) -> Pose:
    """Pose of the brightest-R navmask pixel, snapped to its cell center.

    Ties resolve to the lowest row-major pixel index.
    """
    if not raster.navmask.any():
        raise EmptyNavmask("raster has no navigable pixels")
    r_chan = raster.pixels[:, :, 0].astype(np.int64)
    masked = np.where(raster.navmask, r_chan, -1)
    flat = int(np.argmax(masked))
    row, col = divmod(flat, raster.width)
    xy = transform_invert(raster.transform, np.array([[col + 0.5, row + 0.5]]))[0]
    ix, iy = grid.cell_of(float(xy[0]), float(xy[1]))
    ix = min(max(ix, 0), grid.nx - 1)
    iy = min(max(iy, 0), grid.ny - 1)
    cx, cy = grid.cell_center(ix, iy)
    return Pose(x=cx, y=cy)


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(px.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM (P6)")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise ValueError("expected maxval 255")
    raw = parts[3][: w * h * 3]
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def save_raster(
    raster: FieldRaster,
    path: str | Path,
    question_id: str | None = None,
    grid: NavGrid | None = None,
) -> None:
    """PPM + sidecar `<stem>.meta.json` (transform, grid, navmask, qid)."""
    path = Path(path)
    write_ppm(path, raster.pixels)
    bits = "".join(
        "1" if v else "0" for v in raster.navmask.reshape(-1)
    )
    meta = {
        "transform": [float(v) for v in raster.transform.reshape(-1)],
        "width": raster.width,
        "height": raster.height,
        "navmask": bits,
        "question_id": question_id,
        "grid": None if grid is None else grid.to_json(),
    }
    meta_path = path.with_suffix(".meta.json")
    with open(meta_path, "w") as f:
        json.dump(meta, f, sort_keys=True, separators=(",", ":"))


def load_raster(path: str | Path) -> tuple[FieldRaster, dict]:
    """Inverse of save_raster; returns (raster, sidecar metadata)."""
    path = Path(path)
    pixels = read_ppm(path)
    with open(path.with_suffix(".meta.json")) as f:
        meta = json.load(f)
    h, w = pixels.shape[:2]
    if (meta["width"], meta["height"]) != (w, h):
        raise TransformMismatch("sidecar dimensions disagree with PPM")
    navmask = np.array([c == "1" for c in meta["navmask"]], dtype=bool).reshape(h, w)
    transform = np.array(meta["transform"], dtype=np.float64).reshape(2, 3)
    return FieldRaster(pixels=pixels, transform=transform, navmask=navmask), meta
