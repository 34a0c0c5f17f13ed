"""The three non-learned baselines.

Random spawn and nearest-mention produce poses (answers then come from
the standard panorama pipeline); TopDownQA answers directly from a
synthetic overhead view and is where side-visible attributes bite.
"""

from __future__ import annotations

import numpy as np

from ..qa import THETA_HI, THETA_LO, Question, RankedAnswers, qa_rank
from ..scene import NavGrid, NoNavigableCell, Pose, Scene
from ..visibility import Observation

# Mid-plateau angular extent: viewing quality exactly 1.
_TOPDOWN_EXTENT = 0.5 * (THETA_LO + THETA_HI)


def baseline_random_spawn(
    scene: Scene, grid: NavGrid, question: Question, rng: np.random.Generator
) -> Pose:
    """Uniform draw over navigable cell centers.

    The question is part of the signature for symmetry with the other
    baselines but cannot influence the draw.
    """
    cells = grid.navigable_cells()
    if not cells:
        raise NoNavigableCell("no navigable cell to spawn in")
    ix, iy = cells[int(rng.integers(len(cells)))]
    x, y = grid.cell_center(ix, iy)
    return Pose(x=x, y=y)


def baseline_nearest_mention(scene: Scene, grid: NavGrid, question: Question) -> Pose:
    """Navigable cell center nearest the referenced-footprint centroid.

    Ties resolve to the lowest row-major cell index (navigable_centers
    preserves that order and argmin takes the first minimum).
    """
    centers = grid.navigable_centers()
    if len(centers) == 0:
        raise NoNavigableCell("no navigable cell near the mention")
    refs = [scene.object_by_id(oid) for oid in question.referenced_ids]
    centroid = np.mean([o.center for o in refs], axis=0)
    d2 = np.sum((centers - centroid[None, :]) ** 2, axis=1)
    x, y = centers[int(np.argmin(d2))]
    return Pose(x=float(x), y=float(y))


def baseline_topdown_qa(scene: Scene, question: Question) -> RankedAnswers:
    """Rank answers from a synthetic overhead panorama.

    Overhead, geometry is fully visible: every object observes at
    fraction 1 with mid-plateau extent. The exception is attributes
    painted on vertical faces — for WhatColorOn questions, side-visible
    objects drop to fraction 0, because a top-down view cannot see them.
    """
    zero_side = question.template == "WhatColorOn"
    observations = [
        Observation(
            object_id=o.id,
            visible_fraction=0.0 if (zero_side and o.side_visible) else 1.0,
            angular_extent=0.0 if (zero_side and o.side_visible) else _TOPDOWN_EXTENT,
            distance=1.0,
        )
        for o in scene.objects_sorted()
    ]
    return qa_rank(question, observations, scene)
