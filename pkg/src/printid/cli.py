"""Command-line entry point: render, train, build-set, classify, evaluate,
sweep, ingest, serve.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, labels,
configs), 3 internal error. The fully resolved configuration and seeds are
written next to every output for reproducibility.
"""

from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click

from . import encoders, evaluation
from .contrastive import AugmentFlags, TrainConfig, train
from .errors import DataError
from .evaluation import (
    SweepTable,
    emit_report,
    evaluate,
    ingest_dataset,
    load_manifest,
    meshes_from_manifest,
    mine_similar_pairs,
    queries_from_manifest,
    sweep_multiview,
    sweep_viewpoints,
    unique_pair_objects,
)
from .geometry import ViewGrid, expand_grid, load_mesh
from .prototypes import SamplingStrategy, build_set, load_set, save_set
from .renderer import RenderConfig, render_batch, save_rendering

_MESH_SUFFIXES = (".stl", ".obj")


def _load_meshes(mesh_dir: str):
    root = Path(mesh_dir)
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in _MESH_SUFFIXES)
    if not paths:
        raise DataError(f"no mesh files ({'/'.join(_MESH_SUFFIXES)}) in {root}")
    return [load_mesh(p) for p in paths]


def _parse_grid(spec: str) -> ViewGrid:
    """Grid spec ``elev1+elev2/step``, e.g. ``30+60/30`` for the 24-view grid."""
    try:
        elevs_part, step_part = spec.split("/")
        elevations = tuple(float(e) for e in elevs_part.split("+"))
        return ViewGrid(elevations_deg=elevations, azimuth_step_deg=float(step_part))
    except ValueError as exc:
        raise click.UsageError(f"bad grid spec {spec!r}; expected like '30+60/30'") from exc


def _parse_strategy(spec: str, seed: int) -> SamplingStrategy:
    """Strategy spec ``mode:n[:elev1+elev2]``, e.g. ``uniform:24`` or
    ``random:8:30+60``."""
    parts = spec.split(":")
    try:
        mode = parts[0]
        n = int(parts[1])
        elevations = tuple(float(e) for e in parts[2].split("+")) if len(parts) > 2 else (30.0, 60.0)
        return SamplingStrategy(mode=mode, n_views=n, elevations_deg=elevations, seed=seed)
    except (IndexError, ValueError) as exc:
        raise click.UsageError(
            f"bad strategy spec {spec!r}; expected like 'uniform:24' or 'random:8:30+60'"
        ) from exc


def _write_resolved_config(out: Path, payload: dict):
    out.parent.mkdir(parents=True, exist_ok=True)
    cfg_path = out.parent / (out.name + ".config.json")
    cfg_path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _render_config(size: int, distance: float) -> RenderConfig:
    return RenderConfig(image_size_px=size, camera_distance=distance)


@click.group()
def cli():
    """Classify 3D-printed objects against their CAD models."""


@cli.command("render")
@click.option("--meshes", "mesh_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--grid", default="30+60/30", show_default=True, help="elevations/azimuth-step")
@click.option("--size", default=224, show_default=True)
@click.option("--distance", default=2.5, show_default=True)
@click.option("--workers", default=None, type=int)
def cmd_render(mesh_dir, out_dir, grid, size, distance, workers):
    """Render every mesh from the viewpoint grid to PNG files."""
    grid_obj = _parse_grid(grid)
    viewpoints = expand_grid(grid_obj)
    config = _render_config(size, distance)
    out = Path(out_dir)
    n = 0
    for mesh in _load_meshes(mesh_dir):
        for rendering in render_batch(mesh, viewpoints, config, workers=workers):
            save_rendering(rendering, out)
            n += 1
    _write_resolved_config(out / "renders", {"grid": grid, "size": size, "distance": distance})
    click.echo(f"wrote {n} renders under {out}")


@cli.command("train")
@click.option("--meshes", "mesh_dir", required=True, type=click.Path(file_okay=False))
@click.option("--backgrounds", "bg_dir", default=None, type=click.Path(file_okay=False))
@click.option("--config", "config_file", default=None, type=click.Path(dir_okay=False))
@click.option("--out", "out_ckpt", required=True, type=click.Path())
@click.option("--encoder", "encoder_ckpt", default=None, type=click.Path(dir_okay=False),
              help="Starting checkpoint; a fresh small encoder when omitted.")
@click.option("--steps", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--render-size", default=64, show_default=True)
def cmd_train(mesh_dir, bg_dir, config_file, out_ckpt, encoder_ckpt, steps, batch_size, lr, seed, render_size):
    """Contrastive fine-tuning on rendered views (defaults < file < flags)."""
    overrides = {}
    if config_file:
        overrides.update(json.loads(Path(config_file).read_text()))
    if steps is not None:
        overrides["steps"] = steps
    if batch_size is not None:
        overrides["batch_size"] = batch_size
    if lr is not None:
        overrides["learning_rate"] = lr
    if seed is not None:
        overrides["seed"] = seed
    if "augment" in overrides:
        overrides["augment"] = AugmentFlags(**overrides["augment"])
    config = TrainConfig(**overrides)
    meshes = _load_meshes(mesh_dir)
    background_pool = _load_background_pool(bg_dir) if bg_dir else None
    if encoder_ckpt:
        encoder = encoders.load_checkpoint(encoder_ckpt)
    else:
        encoder = encoders.SmallConvEncoder(seed=config.seed)
    renderer_cfg = _render_config(render_size, 2.5)
    encoder, log = train(
        encoder, meshes, config, background_pool=background_pool, renderer_cfg=renderer_cfg
    )
    out = Path(out_ckpt)
    encoders.save_checkpoint(encoder, out)
    log.save(out.with_suffix(".log.jsonl"))
    from dataclasses import asdict

    _write_resolved_config(out, {"train_config": asdict(config), "meshes": mesh_dir, "n_meshes": len(meshes)})
    click.echo(f"trained {config.steps or config.epochs} -> {out} (final loss {log.losses[-1]:.4f})")


def _load_background_pool(bg_dir):
    import numpy as np
    from PIL import Image

    pool = []
    for p in sorted(Path(bg_dir).iterdir()):
        if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"):
            with Image.open(p) as img:
                pool.append(np.asarray(img.convert("RGB")))
    if not pool:
        raise DataError(f"no background images in {bg_dir}")
    return pool


@cli.command("build-set")
@click.option("--meshes", "mesh_dir", required=True, type=click.Path(file_okay=False))
@click.option("--encoder", "encoder_ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--strategy", default="uniform:24", show_default=True)
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--set-id", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--render-size", default=224, show_default=True)
@click.option("--workers", default=None, type=int)
def cmd_build_set(mesh_dir, encoder_ckpt, strategy, out_file, set_id, seed, render_size, workers):
    """Build a prototype set from meshes with a sampling strategy."""
    encoder = encoders.load_checkpoint(encoder_ckpt)
    strat = _parse_strategy(strategy, seed)
    meshes = _load_meshes(mesh_dir)
    render_cfg = _render_config(render_size, 2.5)
    built = build_set(meshes, strat, encoder, render_cfg, set_id=set_id, workers=workers)
    save_set(built, out_file)
    _write_resolved_config(Path(out_file), {"strategy": strategy, "seed": seed, "render_size": render_size})
    click.echo(f"built set {built.set_id!r} with {len(built)} prototypes -> {out_file}")


@cli.command("classify")
@click.option("--image", "images", required=True, multiple=True, type=click.Path(dir_okay=False))
@click.option("--set", "set_file", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder", "encoder_ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--agg", default="score_average", show_default=True,
              type=click.Choice(["single", "majority_vote", "score_average"]))
@click.option("--top-k", default=5, show_default=True)
def cmd_classify(images, set_file, encoder_ckpt, agg, top_k):
    """Classify one or more images of a single object; prints ranked ids."""
    from PIL import Image
    import numpy as np

    from .classify import classify_multiview

    encoder = encoders.load_checkpoint(encoder_ckpt)
    cset = load_set(set_file)
    arrays = []
    for path in images:
        with Image.open(path) as img:
            arrays.append(np.asarray(img.convert("RGB")))
    method = agg if len(arrays) > 1 else "single"
    ranking = classify_multiview(arrays, cset, encoder, method=method, query_ref=images[0])
    for oid, score in ranking.top_k(top_k):
        click.echo(f"{score:+.6f}  {oid}")


@cli.command("evaluate")
@click.option("--manifest", "manifest_file", required=True, type=click.Path(dir_okay=False))
@click.option("--set", "set_file", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder", "encoder_ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--subset", default=None, help="'similar' or 'condition:TAG'")
@click.option("--similar-top-n", default=20, show_default=True)
@click.option("--agg", default="single", show_default=True,
              type=click.Choice(["single", "majority_vote", "score_average"]))
@click.option("--out", "out_prefix", required=True, type=click.Path())
def cmd_evaluate(manifest_file, set_file, encoder_ckpt, subset, similar_top_n, agg, out_prefix):
    """Evaluate manifest queries against a set; writes text, CSV, and PNG."""
    encoder = encoders.load_checkpoint(encoder_ckpt)
    cset = load_set(set_file)
    records = load_manifest(manifest_file)
    condition = None
    if subset and subset.startswith("condition:"):
        condition = subset.split(":", 1)[1]
    queries = queries_from_manifest(records, condition=condition)
    if subset == "similar":
        pairs = mine_similar_pairs(cset, similar_top_n)
        keep = set(unique_pair_objects(pairs))
        queries = [q for q in queries if q.true_object_id in keep]
        sub_ids = {oid: cset.prototypes[oid] for oid in sorted(keep)}
        from .prototypes import ClassificationSet

        cset = ClassificationSet(
            set_id=cset.set_id + "-similar",
            prototypes=sub_ids,
            encoder_id=cset.encoder_id,
            render_config_digest=cset.render_config_digest,
        )
    if not queries:
        raise DataError("no queries selected (empty manifest or unmatched subset)")
    report = evaluate(queries, cset, encoder, method=agg)
    out = Path(out_prefix)
    emit_report(report, "text_table", out.with_suffix(".txt"))
    emit_report(report, "csv", out.with_suffix(".csv"))
    emit_report(report, "plot_png", out.with_suffix(".png"))
    _write_resolved_config(out, {"subset": subset, "agg": agg, "set": set_file})
    click.echo(f"top1={report.top1:.4f} top5={report.top5:.4f} n={report.n_queries}")


@cli.command("sweep")
@click.option("--kind", required=True, type=click.Choice(["viewpoints", "multiview"]))
@click.option("--manifest", "manifest_file", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder", "encoder_ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--set", "set_file", default=None, type=click.Path(dir_okay=False),
              help="Required for multiview sweeps.")
@click.option("--n-values", default="2,4,8,12,16,24", show_default=True)
@click.option("--trials", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--render-size", default=224, show_default=True)
@click.option("--out", "out_prefix", required=True, type=click.Path())
def cmd_sweep(kind, manifest_file, encoder_ckpt, set_file, n_values, trials, seed, render_size, out_prefix):
    """Run the viewpoint-count or multi-view aggregation sweep."""
    encoder = encoders.load_checkpoint(encoder_ckpt)
    records = load_manifest(manifest_file)
    queries = queries_from_manifest(records)
    values = [int(v) for v in n_values.split(",")]
    if kind == "viewpoints":
        meshes = meshes_from_manifest(records)
        strategies = [
            SamplingStrategy(mode="uniform", n_views=values[0], elevations_deg=(30.0, 60.0)),
            SamplingStrategy(mode="random", n_views=values[0], elevations_deg=(30.0, 60.0)),
        ]
        table = sweep_viewpoints(
            meshes, queries, encoder, n_values=values, strategies=strategies,
            render_cfg=_render_config(render_size, 2.5), trials=trials, seed=seed,
        )
    else:
        if not set_file:
            raise click.UsageError("--set is required for multiview sweeps")
        cset = load_set(set_file)
        table = sweep_multiview(queries, cset, encoder, m_values=values, trials=trials, seed=seed)
    out = Path(out_prefix)
    table.to_csv(out.with_suffix(".csv"))
    emit_report(table, "text_table", out.with_suffix(".txt"))
    emit_report(table, "plot_png", out.with_suffix(".png"))
    _write_resolved_config(out, {"kind": kind, "n_values": values, "trials": trials, "seed": seed})
    click.echo(f"sweep rows: {len(table.rows)} -> {out.with_suffix('.csv')}")


@cli.command("ingest")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_manifest", required=True, type=click.Path())
def cmd_ingest(dataset_dir, out_manifest):
    """Scan a dataset directory into a manifest file."""
    records = ingest_dataset(dataset_dir, out_manifest)
    n_photos = sum(len(r.photos) for r in records)
    click.echo(f"manifest with {len(records)} records ({n_photos} photos) -> {out_manifest}")


@cli.command("serve")
@click.option("--encoder", "encoder_ckpt", default=None, type=click.Path(dir_okay=False))
@click.option("--sets", "sets_dir", default=None, type=click.Path(file_okay=False))
@click.option("--meshes", "mesh_dir", default=None, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.option("--state", "state_path", default=None, type=click.Path())
def cmd_serve(encoder_ckpt, sets_dir, mesh_dir, host, port, state_path):
    """Run the HTTP inference service."""
    import uvicorn

    from .service import create_app

    encoder = encoders.load_checkpoint(encoder_ckpt) if encoder_ckpt else None
    app = create_app(
        encoder=encoder, sets_dir=sets_dir, meshes_dir=mesh_dir, state_path=state_path
    )
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
