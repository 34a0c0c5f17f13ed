"""
Answerability fields and best viewpoints
========================================

A question about a scene is answerable from some standpoints and not
others. The field scores every navigable cell; its argmax is where an
agent should go to answer. The field round-trips through an RGB raster
(scores in the red channel, annotations painted on top).
"""

from pathlib import Path

from ansfield.fields import (
    best_viewpoint,
    compute_field,
    decode_field,
    encode_raster,
    normalize,
    save_raster,
    write_ppm,
)
from ansfield.qa import generate_questions, qa_rank
from ansfield.scene import SceneConfig, build_navgrid, generate_scene
from ansfield.visibility import panorama

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

scene = generate_scene(seed=7, config=SceneConfig())
grid = build_navgrid(scene, cell_size=0.25, wall_buffer=0.1)
question = generate_questions(scene, seed=7, per_scene=3)[0]
print(f"question: {question.text}")
print(f"truth:    {question.answer}")

# Score every navigable cell: the product over referenced objects of
# visible fraction times viewing quality.
field = normalize(compute_field(scene, grid, question))
ix, iy = field.argmax_cell()
print(f"field max {field.max_score():.3f} at cell (ix={ix}, iy={iy})")

# Encode to RGB, save with its sidecar, and check the plain decode stays
# within quantization error. The annotated variant paints TopPoint and
# BBox over the scores, so only the plain one round-trips exactly.
raster = encode_raster(field, scene, question, toppoint=True, bbox=True)
save_raster(raster, out / "field.ppm", question_id=question.id, grid=grid)
plain = encode_raster(field, scene, question)
write_ppm(out / "field_plain.ppm", plain.pixels)
back = decode_field(plain, grid)
err = abs(back.scores - field.scores).max()
print(f"wrote {out / 'field.ppm'}; plain decode error {err:.4f} (<= 1/255)")

# Walk the agent to the decoded argmax and let the oracle answer there.
pose = best_viewpoint(raster, grid)
ranked = qa_rank(question, panorama(scene, pose), scene)
print(f"best viewpoint ({pose.x:.2f}, {pose.y:.2f})")
print(f"oracle top-3 there: {ranked.top(3)}")
