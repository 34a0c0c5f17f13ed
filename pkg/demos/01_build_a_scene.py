"""
Build a scene and its navigation grid
=====================================

Procedural rectangular rooms: an outer shell of walls, a few interior
partitions, and furniture drawn from a small category vocabulary. The
same seed always builds the same scene.
"""

from pathlib import Path

from ansfield.fields import render_topdown, write_ppm
from ansfield.scene import SceneConfig, build_navgrid, generate_scene

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# A seed is all it takes; the config just bounds the random choices.
scene = generate_scene(seed=7, config=SceneConfig())
print(f"scene {scene.id}: {scene.width:.1f} x {scene.height:.1f} m, "
      f"{len(scene.walls)} walls, {len(scene.objects)} objects")

for o in scene.objects_sorted():
    x0, y0, x1, y1 = o.footprint
    tag = "side-visible" if o.side_visible else "top-visible"
    print(f"  {o.id}: {o.color} {o.category:<13} "
          f"[{x0:.2f},{y0:.2f},{x1:.2f},{y1:.2f}]  {tag}")

# The grid marks where an agent can stand: cells clear of furniture and
# a small buffer away from every wall.
grid = build_navgrid(scene, cell_size=0.25, wall_buffer=0.1)
total = grid.navigable.size
free = int(grid.navigable.sum())
print(f"grid {grid.nx} x {grid.ny} cells of {grid.cell_size} m; "
      f"{free}/{total} navigable")

# Everything downstream (fields, datasets, the model) works on top-down
# renders: floor light gray, objects mid gray, walls dark gray.
pixels = render_topdown(scene, grid)
write_ppm(out / "scene.ppm", pixels)
print(f"wrote {out / 'scene.ppm'} ({pixels.shape[1]}x{pixels.shape[0]})")
