import math

import numpy as np
import pytest

from ansfield.geometry import point_segment_distance, rect_contains, rects_overlap
from ansfield.scene import (
    NavGrid,
    NoNavigableCell,
    Scene,
    SceneConfig,
    SceneObject,
    build_navgrid,
    generate_scene,
)


def test_generate_scene_is_deterministic():
    cfg = SceneConfig()
    a = generate_scene(123, cfg)
    b = generate_scene(123, cfg)
    assert a.dumps() == b.dumps()
    assert a.dumps() != generate_scene(124, cfg).dumps()


def test_generate_scene_accepts_tuple_seeds():
    a = generate_scene((5, 1, 2), SceneConfig())
    b = generate_scene((5, 1, 2), SceneConfig())
    assert a.dumps() == b.dumps()


@pytest.mark.parametrize("seed", range(12))
def test_generated_scenes_respect_invariants(seed):
    cfg = SceneConfig()
    scene = generate_scene(seed, cfg)
    assert cfg.width_range[0] <= scene.width <= cfg.width_range[1]
    assert cfg.n_objects_range[0] <= len(scene.objects) <= cfg.n_objects_range[1]
    for o in scene.objects:
        x0, y0, x1, y1 = o.footprint
        assert 0 <= x0 < x1 <= scene.width
        assert 0 <= y0 < y1 <= scene.height
        assert o.category in cfg.categories
        assert o.color in cfg.colors
    for i, a in enumerate(scene.objects):
        for b in scene.objects[i + 1 :]:
            assert not rects_overlap(a.footprint, b.footprint)
    for ax, ay, bx, by in scene.walls:
        # Partitions are anchored to a boundary wall at one end.
        ends = [(ax, ay), (bx, by)]
        assert any(
            math.isclose(x, 0) or math.isclose(x, scene.width)
            or math.isclose(y, 0) or math.isclose(y, scene.height)
            for x, y in ends
        )


def test_scene_json_round_trip():
    scene = generate_scene(3, SceneConfig())
    again = Scene.loads(scene.dumps())
    assert again == scene
    assert again.dumps() == scene.dumps()


def test_scene_rejects_overlapping_objects():
    with pytest.raises(ValueError, match="overlap"):
        Scene(
            id="bad",
            width=4,
            height=4,
            walls=(),
            objects=(
                SceneObject("a", "couch", "red", (0, 0, 2, 2), False),
                SceneObject("b", "lamp", "blue", (1, 1, 3, 3), False),
            ),
        )


def test_scene_rejects_wall_through_object():
    with pytest.raises(ValueError, match="intersects"):
        Scene(
            id="bad",
            width=4,
            height=4,
            walls=((1.5, 0.0, 1.5, 4.0),),
            objects=(SceneObject("a", "couch", "red", (1, 1, 2, 2), False),),
        )


def test_empty_room_grid_all_navigable():
    scene = Scene(id="empty", width=4.0, height=4.0, walls=(), objects=())
    grid = build_navgrid(scene, cell_size=0.5, wall_buffer=0.0)
    assert (grid.nx, grid.ny) == (8, 8)
    assert grid.navigable.all()
    assert len(grid.navigable_cells()) == 64


def test_navgrid_matches_pointwise_oracle():
    for seed in range(6):
        scene = generate_scene(seed, SceneConfig())
        grid = build_navgrid(scene, cell_size=0.25, wall_buffer=0.1)
        for iy in range(grid.ny):
            for ix in range(grid.nx):
                cx, cy = grid.cell_center(ix, iy)
                want = (
                    cx <= scene.width
                    and cy <= scene.height
                    and not any(
                        rect_contains(o.footprint, cx, cy) for o in scene.objects
                    )
                    and all(
                        point_segment_distance(cx, cy, ((w[0], w[1]), (w[2], w[3])))
                        >= 0.1
                        for w in scene.walls
                    )
                )
                assert grid.navigable[iy, ix] == want


def test_navgrid_cell_round_trip():
    scene = Scene(id="empty", width=5.0, height=3.0, walls=(), objects=())
    grid = build_navgrid(scene, cell_size=0.25, wall_buffer=0.0)
    for ix, iy in ((0, 0), (3, 7), (grid.nx - 1, grid.ny - 1)):
        x, y = grid.cell_center(ix, iy)
        assert grid.cell_of(x, y) == (ix, iy)


def test_navgrid_row_major_order():
    scene = Scene(id="empty", width=1.0, height=1.0, walls=(), objects=())
    grid = build_navgrid(scene, cell_size=0.5, wall_buffer=0.0)
    assert grid.navigable_cells() == [(0, 0), (1, 0), (0, 1), (1, 1)]
    centers = grid.navigable_centers()
    assert np.allclose(centers[1], (0.75, 0.25))
    assert np.allclose(centers[2], (0.25, 0.75))


def test_navgrid_json_round_trip():
    scene = generate_scene(9, SceneConfig())
    grid = build_navgrid(scene)
    again = NavGrid.from_json(grid.to_json())
    assert again.origin == grid.origin
    assert again.cell_size == grid.cell_size
    assert np.array_equal(again.navigable, grid.navigable)


def test_fully_blocked_scene_raises():
    scene = Scene(
        id="full",
        width=1.0,
        height=1.0,
        walls=(),
        objects=(SceneObject("a", "bed", "red", (0, 0, 1, 1), False),),
    )
    with pytest.raises(NoNavigableCell):
        build_navgrid(scene, cell_size=0.5, wall_buffer=0.0)
