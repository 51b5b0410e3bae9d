"""Cosine-similarity classification against a prototype set.

Every query gets a full ranking over the set (a few hundred classes at
most, so exhaustive similarity is exact and cheap). Multi-view queries are
combined either by majority vote over per-view top-1 picks or by averaging
the per-class similarity scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import Encoder, cosine_similarity_matrix
from .errors import EmptySet, EmptyViews, EncoderMismatch, SetMismatch
from .prototypes import ClassificationSet

__all__ = [
    "AGGREGATION_METHODS",
    "PredictionRanking",
    "classify_image",
    "classify_images",
    "aggregate",
    "classify_multiview",
]

AGGREGATION_METHODS = ("single", "majority_vote", "score_average")


@dataclass(frozen=True)
class PredictionRanking:
    """Scores and the induced total order over one set's object ids.

    Ties are broken by ascending object id so rankings are reproducible;
    aggregated rankings additionally use mean similarity before the id.
    """

    query_ref: str
    set_id: str
    scores: dict  # object_id -> score
    ranked_ids: tuple

    @property
    def top1(self) -> str:
        return self.ranked_ids[0]

    def top_k(self, k: int) -> list[tuple[str, float]]:
        return [(oid, self.scores[oid]) for oid in self.ranked_ids[:k]]

    def to_record(self, k: int = 5, method: str = "single") -> dict:
        """JSON-ready record: query_ref, set_id, method, top-k ids + scores."""
        return {
            "query_ref": self.query_ref,
            "set_id": self.set_id,
            "method": method,
            "top_k": [
                {"object_id": oid, "score": score} for oid, score in self.top_k(k)
            ],
        }


def _rank(scores: dict, secondary: dict | None = None) -> tuple:
    if secondary is None:
        return tuple(sorted(scores, key=lambda o: (-scores[o], o)))
    return tuple(sorted(scores, key=lambda o: (-scores[o], -secondary[o], o)))


def classify_image(
    image, set_: ClassificationSet, encoder: Encoder, query_ref: str = ""
) -> PredictionRanking:
    """Rank every object in the set by cosine similarity to the query."""
    return classify_images([image], set_, encoder, query_refs=[query_ref])[0]


def classify_images(
    images, set_: ClassificationSet, encoder: Encoder, query_refs=None
) -> list[PredictionRanking]:
    """Batch variant of :func:`classify_image` (one encode pass)."""
    if len(set_) == 0:
        raise EmptySet(f"set {set_.set_id!r} has no prototypes")
    if encoder.encoder_id != set_.encoder_id:
        raise EncoderMismatch(
            f"set {set_.set_id!r} was built with {set_.encoder_id!r}, "
            f"queries use {encoder.encoder_id!r}"
        )
    if query_refs is None:
        query_refs = [f"query-{i}" for i in range(len(images))]
    embeddings = encoder.encode(images)
    sims = cosine_similarity_matrix(embeddings, set_.matrix())  # (n, N)
    ids = set_.object_ids
    out = []
    for ref, row in zip(query_refs, sims):
        scores = {oid: float(s) for oid, s in zip(ids, row)}
        out.append(
            PredictionRanking(
                query_ref=ref, set_id=set_.set_id, scores=scores, ranked_ids=_rank(scores)
            )
        )
    return out


def aggregate(views: list[PredictionRanking], method: str) -> PredictionRanking:
    """Combine per-view rankings for one physical object.

    ``majority_vote`` scores each class by its fraction of per-view top-1
    votes, breaking ties by mean similarity and then object id;
    ``score_average`` takes the per-class mean similarity. ``single``
    requires exactly one view and returns it unchanged. The result is
    independent of view order.
    """
    if method not in AGGREGATION_METHODS:
        raise ValueError(f"unknown aggregation method {method!r}")
    if not views:
        raise EmptyViews("cannot aggregate zero views")
    first = views[0]
    for v in views[1:]:
        if v.set_id != first.set_id or set(v.scores) != set(first.scores):
            raise SetMismatch("rankings to aggregate come from different sets")
    if method == "single":
        if len(views) != 1:
            raise ValueError(f"method 'single' expects one view, got {len(views)}")
        return first
    if len(views) == 1:
        return first
    ids = list(first.scores)
    mean_scores = {o: float(np.mean([v.scores[o] for v in views])) for o in ids}
    ref = first.query_ref + f"+{len(views) - 1}views"
    if method == "score_average":
        return PredictionRanking(
            query_ref=ref,
            set_id=first.set_id,
            scores=mean_scores,
            ranked_ids=_rank(mean_scores),
        )
    votes = {o: 0.0 for o in ids}
    for v in views:
        votes[v.top1] += 1.0 / len(views)
    return PredictionRanking(
        query_ref=ref,
        set_id=first.set_id,
        scores=votes,
        ranked_ids=_rank(votes, secondary=mean_scores),
    )


def classify_multiview(
    images, set_: ClassificationSet, encoder: Encoder, method: str = "score_average",
    query_ref: str = "",
) -> PredictionRanking:
    """Classify several images of the same physical object and aggregate."""
    refs = [f"{query_ref}#{i}" if query_ref else f"view-{i}" for i in range(len(images))]
    if not images:
        raise EmptyViews("cannot classify zero images")
    views = classify_images(images, set_, encoder, query_refs=refs)
    if method == "single" and len(views) > 1:
        raise ValueError("method 'single' expects one image")
    return aggregate(views, method if len(views) > 1 else "single")
