"""Templated questions and the deterministic synthetic QA oracle.

Answerability of a question from a viewpoint is the product, over the
objects the question references, of visible_fraction * viewing_quality.
The oracle ranks the full answer vocabulary so EM@K is always defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import rect_rect_distance
from .scene import Scene, SceneObject, load_vocab
from .visibility import Observation

THETA_LO = 0.10
THETA_HI = 0.80
THETA_CUT = 2.5
DISTRACTOR_FLOOR = 0.01

TEMPLATES = ("WhereLocated", "WhatNextTo", "WhatColorOn")


class InsufficientObjects(ValueError):
    pass


class MissingObservation(KeyError):
    pass


@dataclass(frozen=True)
class Question:
    id: str
    template: str
    text: str
    referenced_ids: tuple[str, ...]
    answer: str
    vocab: tuple[str, ...]

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if not self.referenced_ids:
            raise ValueError("referenced_ids must be non-empty")
        if self.answer not in self.vocab:
            raise ValueError(f"answer {self.answer!r} not in vocab")

    def to_json(self) -> dict:
        vocab = load_vocab()
        ref: str | list[str]
        if list(self.vocab) == vocab["categories"]:
            ref = "categories"
        elif list(self.vocab) == vocab["colors"]:
            ref = "colors"
        else:
            ref = list(self.vocab)
        return {
            "id": self.id,
            "template": self.template,
            "text": self.text,
            "referenced_ids": list(self.referenced_ids),
            "answer": self.answer,
            "vocab": ref,
        }

    @staticmethod
    def from_json(doc: dict) -> "Question":
        ref = doc["vocab"]
        vocab = tuple(load_vocab()[ref]) if isinstance(ref, str) else tuple(ref)
        return Question(
            id=doc["id"],
            template=doc["template"],
            text=doc["text"],
            referenced_ids=tuple(doc["referenced_ids"]),
            answer=doc["answer"],
            vocab=vocab,
        )


@dataclass(frozen=True)
class RankedAnswers:
    """(token, confidence) pairs, descending confidence, vocab-index ties."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        confs = [c for _, c in self.entries]
        if any(b > a for a, b in zip(confs, confs[1:])):
            raise ValueError("entries must be sorted by descending confidence")

    def rank_of(self, token: str) -> int:
        for i, (tok, _) in enumerate(self.entries):
            if tok == token:
                return i + 1
        raise KeyError(token)

    def top(self, k: int) -> tuple[str, ...]:
        return tuple(tok for tok, _ in self.entries[:k])

    def to_json(self) -> list:
        return [[tok, conf] for tok, conf in self.entries]


def _ranked(vocab: tuple[str, ...], confidences: list[float]) -> RankedAnswers:
    order = sorted(range(len(vocab)), key=lambda i: (-confidences[i], i))
    return RankedAnswers(tuple((vocab[i], confidences[i]) for i in order))


def viewing_quality(
    extent,
    theta_lo: float = THETA_LO,
    theta_hi: float = THETA_HI,
    theta_cut: float = THETA_CUT,
):
    """Trapezoidal band-pass on angular extent (radians).

    0 at 0, ramps to 1 over [0, theta_lo], plateau to theta_hi, ramps back
    to 0 at theta_cut and stays 0 beyond (object fills the view — too
    close to be a good vantage). Accepts scalars or arrays.
    """
    if not (0.0 < theta_lo < theta_hi < theta_cut <= 2.0 * math.pi):
        raise ValueError(
            f"invalid band: need 0 < {theta_lo} < {theta_hi} < {theta_cut} <= 2*pi"
        )
    e = np.asarray(extent, dtype=np.float64)
    up = e / theta_lo
    down = (theta_cut - e) / (theta_cut - theta_hi)
    q = np.clip(np.minimum(up, down), 0.0, 1.0)
    q = np.where(e > 0.0, q, 0.0)
    return float(q) if np.ndim(extent) == 0 else q


def _observation_map(panorama: list[Observation]) -> dict[str, Observation]:
    return {obs.object_id: obs for obs in panorama}


def answerability(
    question: Question,
    panorama: list[Observation],
    theta_lo: float = THETA_LO,
    theta_hi: float = THETA_HI,
    theta_cut: float = THETA_CUT,
) -> float:
    """Product over referenced objects of fraction * quality; 0 if any
    referenced object is invisible."""
    by_id = _observation_map(panorama)
    score = 1.0
    for oid in question.referenced_ids:
        if oid not in by_id:
            raise MissingObservation(oid)
        obs = by_id[oid]
        score *= obs.visible_fraction * viewing_quality(
            obs.angular_extent, theta_lo, theta_hi, theta_cut
        )
    return score


def qa_rank(
    question: Question,
    panorama: list[Observation],
    scene: Scene,
    theta_lo: float = THETA_LO,
    theta_hi: float = THETA_HI,
    theta_cut: float = THETA_CUT,
) -> RankedAnswers:
    """Rank the vocabulary: truth scores its answerability; a distractor
    naming an unreferenced object present in the scene scores half the
    best matching fraction; everything else gets a fixed floor.

    Objects the question itself mentions never act as distractors — the
    asker already named them, so "couch" is not a plausible wrong answer
    to "what is next to the couch?".
    """
    by_id = _observation_map(panorama)
    for oid in question.referenced_ids:
        if oid not in by_id:
            raise MissingObservation(oid)
    truth_conf = answerability(question, panorama, theta_lo, theta_hi, theta_cut)
    referenced = set(question.referenced_ids)

    confs: list[float] = []
    for token in question.vocab:
        if token == question.answer:
            confs.append(truth_conf)
            continue
        best = None
        for obj in scene.objects:
            if obj.id in referenced or not _names_object(token, obj):
                continue
            obs = by_id.get(obj.id)
            frac = obs.visible_fraction if obs is not None else 0.0
            best = frac if best is None else max(best, frac)
        confs.append(DISTRACTOR_FLOOR if best is None else 0.5 * best)
    return _ranked(question.vocab, confs)


def _names_object(token: str, obj: SceneObject) -> bool:
    return token == obj.category or token == obj.color


def _nearest_other(scene: Scene, target: SceneObject) -> SceneObject:
    best = None
    best_d = math.inf
    for o in scene.objects:
        if o.id == target.id:
            continue
        d = rect_rect_distance(target.footprint, o.footprint)
        if d < best_d:
            best, best_d = o, d
    assert best is not None
    return best


def generate_questions(
    scene: Scene,
    seed,
    per_scene: int,
    categories: tuple[str, ...] | None = None,
    colors: tuple[str, ...] | None = None,
    template_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3),
) -> list[Question]:
    """Deterministic templated questions for one scene.

    Every template needs an anchor (the nearest other object), so scenes
    need at least two objects. WhereLocated requires seeing only its
    target — the answer describes the surroundings; the two relational
    templates require seeing both target and anchor. WhatColorOn picks
    side-visible targets when the scene has any: their color is exactly
    the attribute a top-down view misses.
    """
    if len(scene.objects) < 2:
        raise InsufficientObjects(
            f"scene {scene.id} has {len(scene.objects)} objects; need >= 2"
        )
    vocab = load_vocab()
    cats = tuple(vocab["categories"]) if categories is None else tuple(categories)
    cols = tuple(vocab["colors"]) if colors is None else tuple(colors)
    w = np.asarray(template_weights, dtype=np.float64)
    if w.shape != (3,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("template_weights must be three non-negative reals")
    w = w / w.sum()

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    objs = list(scene.objects)
    side = [o for o in objs if o.side_visible]

    questions: list[Question] = []
    for i in range(per_scene):
        template = TEMPLATES[int(rng.choice(len(TEMPLATES), p=w))]
        if template == "WhereLocated":
            target = objs[int(rng.integers(len(objs)))]
            anchor = _nearest_other(scene, target)
            text = f"Where is the {target.color} {target.category} located?"
            answer = anchor.category
            referenced = (target.id,)
            vocab_t = cats
        elif template == "WhatNextTo":
            target = objs[int(rng.integers(len(objs)))]
            anchor = _nearest_other(scene, target)
            text = f"What is next to the {target.color} {target.category}?"
            answer = anchor.category
            referenced = (target.id, anchor.id)
            vocab_t = cats
        else:  # WhatColorOn
            pool = side if side else objs
            target = pool[int(rng.integers(len(pool)))]
            anchor = _nearest_other(scene, target)
            text = (
                f"What color is the {target.category} on the "
                f"{anchor.color} {anchor.category}?"
            )
            answer = target.color
            referenced = (target.id, anchor.id)
            vocab_t = cols
        questions.append(
            Question(
                id=f"{scene.id}_q{i:02d}",
                template=template,
                text=text,
                referenced_ids=referenced,
                answer=answer,
                vocab=vocab_t,
            )
        )
    return questions
