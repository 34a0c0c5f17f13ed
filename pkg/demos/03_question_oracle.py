"""
The synthetic QA oracle and why viewpoints matter
=================================================

Answers here are a pure function of what the agent sees: the truth's
confidence is the answerability of the question, wrong answers are
capped at half the visibility of whatever object they name. Standing
somewhere bad loses to standing somewhere good, and a top-down camera
loses on exactly the attributes only visible from the side.
"""

import numpy as np

from ansfield.harness.baselines import baseline_topdown_qa
from ansfield.qa import answerability, generate_questions, qa_rank
from ansfield.scene import Pose, SceneConfig, build_navgrid, generate_scene
from ansfield.visibility import panorama

scene = generate_scene(seed=11, config=SceneConfig())
grid = build_navgrid(scene, cell_size=0.25, wall_buffer=0.1)
questions = generate_questions(scene, seed=11, per_scene=6)

# One of each template, if the scene supports it.
seen = {}
for q in questions:
    seen.setdefault(q.template, q)
for name, q in sorted(seen.items()):
    print(f"{name:<12} {q.text!r}  ->  {q.answer}")

q = seen.get("WhatColorOn") or questions[0]
print(f"\nworking question: {q.text}")

# Compare the oracle's confidence in the truth across all standpoints.
centers = grid.navigable_centers()
scores = [answerability(q, panorama(scene, Pose(x, y))) for x, y in centers]
best = int(np.argmax(scores))
worst = int(np.argmin(scores))
for tag, i in (("best", best), ("worst", worst)):
    x, y = centers[i]
    ranked = qa_rank(q, panorama(scene, Pose(x, y)), scene)
    print(f"{tag:<6} pose ({x:.2f},{y:.2f})  answerability {scores[i]:.3f}  "
          f"truth rank {ranked.rank_of(q.answer)}  top: {ranked.top(3)}")

# The top-down baseline sees every footprint perfectly but no vertical
# face, so color-on-object questions collapse.
ranked_td = baseline_topdown_qa(scene, q)
print(f"topdown  truth rank {ranked_td.rank_of(q.answer)}  top: {ranked_td.top(3)}")
