"""Test-time analyses: viewpoint count, sampling strategy, multi-view
aggregation.

Three questions, answered on a procedurally generated sandbox with the
deterministic pixel encoder:

1. How does prototype quality grow with the number of rendered views?
2. Does uniform viewpoint coverage beat random sampling at equal budget?
3. Do multiple query views (majority vote / score averaging) help?

Produces CSV tables and PNG plots under demo_output/sweeps.

Run:  python3 demos/04_evaluation_sweeps.py
"""

from pathlib import Path

from printid import (
    LabeledQuery,
    PixelEncoder,
    RenderConfig,
    SamplingStrategy,
    ViewpointSpec,
    build_set,
    emit_report,
    procedural_meshes,
    render,
    sweep_multiview,
    sweep_viewpoints,
)

out_dir = Path("demo_output/sweeps")
config = RenderConfig(image_size_px=32)
encoder = PixelEncoder(32)
meshes = procedural_meshes(10, seed=500, prefix="sw")
queries = [
    LabeledQuery(
        image_path=f"{m.object_id}/{k}",
        true_object_id=m.object_id,
        image=render(m, ViewpointSpec(15 + 30 * k, 30), config).pixels,
    )
    for m in meshes
    for k in range(12)
]
print(f"{len(meshes)} objects, {len(queries)} held-out queries")

print("\nsweep 1+2: number of views, uniform vs random (random repeated 12x) ...")
table = sweep_viewpoints(
    meshes, queries, encoder,
    n_values=(2, 4, 8, 12, 24),
    strategies=(
        SamplingStrategy("uniform", 2, elevations_deg=(30.0, 60.0)),
        SamplingStrategy("random", 2, elevations_deg=(30.0, 60.0)),
    ),
    render_cfg=config,
    trials=12,
    seed=0,
)
for cell in table.summarize():
    spread = f" ± {cell['top1_std']:.3f}" if cell["trials"] > 1 else ""
    print(f"  {cell['strategy']:18s} n={cell['n']:2d}  top-1 {cell['top1_mean']:.3f}{spread}")
table.to_csv(out_dir / "viewpoints.csv")
emit_report(table, "plot_png", out_dir / "viewpoints.png")

print("\nsweep 3: aggregating m query views per object ...")
cset = build_set(meshes, SamplingStrategy("uniform", 4), encoder, config)
multi = sweep_multiview(
    queries, cset, encoder,
    m_values=(1, 2, 3, 5),
    methods=("majority_vote", "score_average"),
    trials=10,
    seed=0,
)
for cell in multi.summarize():
    print(f"  {cell['strategy']:14s} m={cell['n']}  top-1 {cell['top1_mean']:.3f} ± {cell['top1_std']:.3f}")
multi.to_csv(out_dir / "multiview.csv")
emit_report(multi, "plot_png", out_dir / "multiview.png")

print(f"\ntables and plots under {out_dir}")
