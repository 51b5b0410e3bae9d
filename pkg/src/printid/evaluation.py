"""Evaluation protocols: top-k accuracy, per-object deltas, similar-pair
mining, and the test-time sweeps over viewpoint count and multi-view
aggregation.

Datasets enter through a manifest: one record per object with its mesh
path, photo paths, and a condition tag, decoupling the harness from any
hosting layout. Reports and sweep tables serialize to deterministic text,
CSV, or PNG plots.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .classify import AGGREGATION_METHODS, aggregate, classify_images
from .encoders import Encoder, cosine_similarity_matrix
from .errors import UnknownLabel
from .geometry import Mesh, load_mesh
from .prototypes import ClassificationSet, SamplingStrategy, build_set
from .renderer import RenderConfig

__all__ = [
    "LabeledQuery",
    "EvalReport",
    "ManifestRecord",
    "evaluate",
    "per_object_delta",
    "mine_similar_pairs",
    "unique_pair_objects",
    "sweep_viewpoints",
    "sweep_multiview",
    "SweepTable",
    "emit_report",
    "load_manifest",
    "save_manifest",
    "ingest_dataset",
    "queries_from_manifest",
    "meshes_from_manifest",
]


@dataclass(frozen=True)
class LabeledQuery:
    """One test photograph with its ground-truth object id.

    ``image`` may carry an in-memory array; otherwise ``image_path`` is
    loaded on demand.
    """

    image_path: str
    true_object_id: str
    condition_tag: str = ""
    image: np.ndarray | None = None

    def load(self) -> np.ndarray:
        if self.image is not None:
            return self.image
        with Image.open(self.image_path) as img:
            return np.asarray(img.convert("RGB"))


@dataclass
class EvalReport:
    """Top-1/top-5 fractions plus per-object accuracy breakdown.

    ``top1``/``top5`` are None when there were no queries. Per-object
    accuracies are query-weighted, so their weighted mean equals ``top1``.
    """

    top1: float | None
    top5: float | None
    per_object: dict
    per_object_counts: dict
    n_queries: int
    config_digest: str = ""

    def as_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top5": self.top5,
            "n_queries": self.n_queries,
            "per_object": dict(sorted(self.per_object.items())),
            "config_digest": self.config_digest,
        }


def _report_digest(set_: ClassificationSet, encoder: Encoder, method: str) -> str:
    blob = f"{set_.set_id}:{encoder.encoder_id}:{method}".encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def evaluate(
    queries: list[LabeledQuery],
    set_: ClassificationSet,
    encoder: Encoder,
    method: str = "single",
) -> EvalReport:
    """Score labeled queries against a set.

    With ``method="single"`` every query counts once. With an aggregation
    method, queries are grouped by (true id, condition) and each group
    yields one aggregated prediction. A query whose label is missing from
    the set raises :class:`UnknownLabel`.
    """
    if method not in AGGREGATION_METHODS:
        raise ValueError(f"unknown method {method!r}")
    known = set(set_.object_ids)
    for q in queries:
        if q.true_object_id not in known:
            raise UnknownLabel(f"label {q.true_object_id!r} not in set {set_.set_id!r}")
    digest = _report_digest(set_, encoder, method)
    if not queries:
        return EvalReport(
            top1=None, top5=None, per_object={}, per_object_counts={},
            n_queries=0, config_digest=digest,
        )

    if method == "single":
        units = [(q.true_object_id, [q]) for q in queries]
    else:
        grouped: dict = {}
        for q in queries:
            grouped.setdefault((q.true_object_id, q.condition_tag), []).append(q)
        units = [(true_id, qs) for (true_id, _), qs in sorted(grouped.items())]

    correct1: dict = {}
    counts: dict = {}
    n_top1 = n_top5 = 0
    for true_id, qs in units:
        rankings = classify_images(
            [q.load() for q in qs], set_, encoder,
            query_refs=[q.image_path or true_id for q in qs],
        )
        ranking = rankings[0] if method == "single" else aggregate(rankings, method)
        hit1 = ranking.ranked_ids[0] == true_id
        hit5 = true_id in ranking.ranked_ids[:5]
        n_top1 += hit1
        n_top5 += hit5
        correct1[true_id] = correct1.get(true_id, 0) + int(hit1)
        counts[true_id] = counts.get(true_id, 0) + 1
    n = len(units)
    per_object = {o: correct1[o] / counts[o] for o in counts}
    return EvalReport(
        top1=n_top1 / n,
        top5=n_top5 / n,
        per_object=per_object,
        per_object_counts=counts,
        n_queries=n,
        config_digest=digest,
    )


def per_object_delta(a: EvalReport, b: EvalReport) -> dict:
    """Signed per-object accuracy change from report ``a`` to report ``b``,
    keeping only objects whose accuracy actually changed."""
    if set(a.per_object) != set(b.per_object):
        raise ValueError("reports cover different object universes")
    return {
        o: b.per_object[o] - a.per_object[o]
        for o in a.per_object
        if b.per_object[o] != a.per_object[o]
    }


def mine_similar_pairs(set_: ClassificationSet, top_n: int) -> list[tuple]:
    """Unordered prototype pairs ranked by descending cosine similarity."""
    ids = set_.object_ids
    if len(ids) < 2:
        raise ValueError("need at least two prototypes to mine pairs")
    sims = cosine_similarity_matrix(set_.matrix(), set_.matrix())
    pairs = [
        (ids[i], ids[j], float(sims[i, j]))
        for i, j in itertools.combinations(range(len(ids)), 2)
    ]
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return pairs[:top_n]


def unique_pair_objects(pairs: list[tuple]) -> list[str]:
    """Sorted unique object ids appearing in a mined pair list."""
    return sorted({oid for a, b, _ in pairs for oid in (a, b)})


@dataclass
class SweepTable:
    """Rows of (strategy, n, trial, top1, top5) from a sweep run."""

    rows: list = field(default_factory=list)

    def append(self, strategy: str, n: int, trial: int, top1: float, top5: float):
        self.rows.append(
            {"strategy": strategy, "n": n, "trial": trial, "top1": top1, "top5": top5}
        )

    def summarize(self) -> list[dict]:
        """Mean and standard deviation of top-1 per (strategy, n) cell."""
        cells: dict = {}
        for r in self.rows:
            cells.setdefault((r["strategy"], r["n"]), []).append(r["top1"])
        return [
            {
                "strategy": strat,
                "n": n,
                "trials": len(vals),
                "top1_mean": float(np.mean(vals)),
                "top1_std": float(np.std(vals)),
            }
            for (strat, n), vals in sorted(cells.items())
        ]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["strategy,n,trial,top1,top5"]
        for r in self.rows:
            lines.append(
                f"{r['strategy']},{r['n']},{r['trial']},{r['top1']:.6f},{r['top5']:.6f}"
            )
        path.write_text("\n".join(lines) + "\n")
        return path


def sweep_viewpoints(
    meshes: list[Mesh],
    queries: list[LabeledQuery],
    encoder: Encoder,
    n_values: list[int] = (2, 4, 8, 12, 16, 24),
    strategies: list[SamplingStrategy] = (SamplingStrategy(),),
    render_cfg: RenderConfig = RenderConfig(),
    trials: int = 30,
    seed: int = 0,
    workers: int | None = None,
) -> SweepTable:
    """Rebuild prototypes at each (strategy, n) and re-evaluate.

    Uniform strategies are deterministic and run once; random strategies
    run ``trials`` times with derived seeds, so the table carries the
    spread. Deterministic given ``seed``.
    """
    table = SweepTable()
    for template in strategies:
        n_trials = trials if template.mode == "random" else 1
        for n in n_values:
            for trial in range(n_trials):
                strategy = SamplingStrategy(
                    mode=template.mode,
                    n_views=n,
                    elevations_deg=template.elevations_deg,
                    seed=seed + 1000 * trial,
                )
                built = build_set(meshes, strategy, encoder, render_cfg, workers=workers)
                report = evaluate(queries, built, encoder)
                table.append(template.label(), n, trial, report.top1, report.top5)
    return table


def sweep_multiview(
    queries: list[LabeledQuery],
    set_: ClassificationSet,
    encoder: Encoder,
    m_values: list[int] = (1, 2, 3, 5),
    methods: list[str] = ("majority_vote", "score_average"),
    trials: int = 10,
    seed: int = 0,
) -> SweepTable:
    """Aggregate m sampled query views per object and measure accuracy.

    Views are sampled without replacement from each object's queries (all
    of them when fewer than m exist). Rows use the aggregation method as
    the strategy column and m as n.
    """
    by_object: dict = {}
    for q in queries:
        by_object.setdefault(q.true_object_id, []).append(q)
    table = SweepTable()
    for method in methods:
        for m in m_values:
            for trial in range(trials):
                rng = np.random.default_rng(seed + 7919 * trial)
                n_top1 = n_top5 = 0
                for true_id in sorted(by_object):
                    pool = by_object[true_id]
                    take = min(m, len(pool))
                    idx = rng.choice(len(pool), size=take, replace=False)
                    chosen = [pool[int(i)] for i in idx]
                    rankings = classify_images(
                        [q.load() for q in chosen], set_, encoder,
                        query_refs=[q.image_path or true_id for q in chosen],
                    )
                    ranking = (
                        rankings[0] if len(rankings) == 1 else aggregate(rankings, method)
                    )
                    n_top1 += ranking.ranked_ids[0] == true_id
                    n_top5 += true_id in ranking.ranked_ids[:5]
                n = len(by_object)
                table.append(method, m, trial, n_top1 / n, n_top5 / n)
    return table


def emit_report(obj, fmt: str, path: str | Path) -> Path:
    """Write an :class:`EvalReport` or :class:`SweepTable` as ``text_table``,
    ``csv``, or ``plot_png``. Text and CSV bytes are deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        if isinstance(obj, SweepTable):
            return obj.to_csv(path)
        lines = ["metric,value"]
        lines.append(f"top1,{_fmt(obj.top1)}")
        lines.append(f"top5,{_fmt(obj.top5)}")
        lines.append(f"n_queries,{obj.n_queries}")
        for oid in sorted(obj.per_object):
            lines.append(f"per_object.{oid},{obj.per_object[oid]:.6f}")
        path.write_text("\n".join(lines) + "\n")
        return path
    if fmt == "text_table":
        path.write_text(_text_table(obj))
        return path
    if fmt == "plot_png":
        return _plot_png(obj, path)
    raise ValueError(f"unknown format {fmt!r}")


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.6f}"


def _text_table(obj) -> str:
    if isinstance(obj, SweepTable):
        lines = [f"{'strategy':<24} {'n':>4} {'trials':>6} {'top1':>8} {'std':>8}"]
        for cell in obj.summarize():
            lines.append(
                f"{cell['strategy']:<24} {cell['n']:>4} {cell['trials']:>6}"
                f" {cell['top1_mean']:>8.4f} {cell['top1_std']:>8.4f}"
            )
        return "\n".join(lines) + "\n"
    lines = [
        f"queries : {obj.n_queries}",
        f"top-1   : {_fmt(obj.top1)}",
        f"top-5   : {_fmt(obj.top5)}",
    ]
    if obj.per_object:
        lines.append("per-object accuracy:")
        for oid in sorted(obj.per_object):
            lines.append(f"  {oid:<32} {obj.per_object[oid]:.4f}")
    return "\n".join(lines) + "\n"


def _plot_png(obj, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if isinstance(obj, SweepTable):
        cells = obj.summarize()
        strategies = sorted({c["strategy"] for c in cells})
        for strat in strategies:
            pts = [c for c in cells if c["strategy"] == strat]
            xs = [c["n"] for c in pts]
            ys = [c["top1_mean"] for c in pts]
            es = [c["top1_std"] for c in pts]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=strat)
        ax.set_xlabel("views")
        ax.set_ylabel("top-1 accuracy")
        ax.legend()
        ax.grid(alpha=0.3)
    else:
        items = sorted(obj.per_object.items())
        ax.bar(range(len(items)), [v for _, v in items])
        ax.set_xticks(range(len(items)))
        ax.set_xticklabels([k for k, _ in items], rotation=90, fontsize=6)
        ax.set_ylabel("top-1 accuracy")
        ax.set_title(f"top-1 {_fmt(obj.top1)} over {obj.n_queries} queries")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# --- dataset manifest -------------------------------------------------------

_MESH_SUFFIXES = (".stl", ".obj")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class ManifestRecord:
    """One object: its mesh, its photos, and the capture condition."""

    object_id: str
    mesh: str
    photos: tuple
    condition: str = ""


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    data = json.loads(path.read_text())
    records = []
    for rec in data["objects"]:
        records.append(
            ManifestRecord(
                object_id=rec["id"],
                mesh=rec["mesh"],
                photos=tuple(rec.get("photos", ())),
                condition=rec.get("condition", ""),
            )
        )
    return records


def save_manifest(records: list[ManifestRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "objects": [
            {
                "id": r.object_id,
                "mesh": r.mesh,
                "photos": list(r.photos),
                "condition": r.condition,
            }
            for r in records
        ]
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def ingest_dataset(dataset_dir: str | Path, out_path: str | Path) -> list[ManifestRecord]:
    """Build a manifest from an on-disk dataset.

    Expected layout: mesh files under ``meshes/`` (or the root), photos
    under ``photos/<object_id>/`` or ``photos/<object_id>/<condition>/``
    (``images/`` also recognized). Objects without photos are kept with an
    empty photo list so sets can still be built from them.
    """
    root = Path(dataset_dir)
    if not root.is_dir():
        raise FileNotFoundError(root)
    mesh_dirs = [root / "meshes", root]
    meshes: dict = {}
    for d in mesh_dirs:
        if d.is_dir():
            for p in sorted(d.iterdir()):
                if p.suffix.lower() in _MESH_SUFFIXES and p.stem not in meshes:
                    meshes[p.stem] = p
    if not meshes:
        raise FileNotFoundError(f"no {_MESH_SUFFIXES} meshes under {root}")
    photo_root = next((root / n for n in ("photos", "images") if (root / n).is_dir()), None)
    records = []
    for object_id in sorted(meshes):
        obj_dir = photo_root / object_id if photo_root else None
        if obj_dir is None or not obj_dir.is_dir():
            records.append(ManifestRecord(object_id, str(meshes[object_id]), ()))
            continue
        direct = tuple(
            str(p) for p in sorted(obj_dir.iterdir()) if p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if direct:
            records.append(ManifestRecord(object_id, str(meshes[object_id]), direct))
        for cond_dir in sorted(p for p in obj_dir.iterdir() if p.is_dir()):
            photos = tuple(
                str(p)
                for p in sorted(cond_dir.iterdir())
                if p.suffix.lower() in _IMAGE_SUFFIXES
            )
            if photos:
                records.append(
                    ManifestRecord(object_id, str(meshes[object_id]), photos, cond_dir.name)
                )
    save_manifest(records, out_path)
    return records


def queries_from_manifest(
    records: list[ManifestRecord], condition: str | None = None
) -> list[LabeledQuery]:
    """Expand manifest records into one labeled query per photo, optionally
    keeping a single condition tag."""
    queries = []
    for rec in records:
        if condition is not None and rec.condition != condition:
            continue
        for photo in rec.photos:
            queries.append(
                LabeledQuery(
                    image_path=photo,
                    true_object_id=rec.object_id,
                    condition_tag=rec.condition,
                )
            )
    return queries


def meshes_from_manifest(records: list[ManifestRecord]) -> list[Mesh]:
    """Load each distinct object's mesh, normalized."""
    seen: dict = {}
    for rec in records:
        if rec.object_id not in seen:
            seen[rec.object_id] = load_mesh(rec.mesh, object_id=rec.object_id)
    return list(seen.values())
