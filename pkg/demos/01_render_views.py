"""Render a CAD model from the standard viewpoint grid.

Walks the first pipeline stage: normalize a mesh into the canonical frame,
expand the (30, 60)-elevation / 30-degree-azimuth grid into 24 viewpoints,
rasterize each one, and save PNGs plus a contact sheet.

Run:  python3 demos/01_render_views.py [mesh.stl] [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image

from printid import (
    RenderConfig,
    ViewGrid,
    expand_grid,
    load_mesh,
    make_primitive,
    render_batch,
    save_rendering,
)

mesh_path = sys.argv[1] if len(sys.argv) > 1 else None
out_dir = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_output/renders")

if mesh_path:
    mesh = load_mesh(mesh_path)
    print(f"loaded {mesh_path}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces")
else:
    mesh = make_primitive("dumbbell")
    print("no mesh given; using the built-in dumbbell primitive")

radius = np.linalg.norm(mesh.vertices, axis=1).max()
print(f"canonical frame check: bounding-sphere radius = {radius:.9f} (should be 1)")

grid = ViewGrid(elevations_deg=(30.0, 60.0), azimuth_step_deg=30.0)
viewpoints = expand_grid(grid)
print(f"grid: {len(grid.elevations_deg)} elevations x {360 / grid.azimuth_step_deg:.0f} azimuths "
      f"= {len(viewpoints)} views")

config = RenderConfig(image_size_px=224)
renderings = render_batch(mesh, viewpoints, config, workers=4)
for r in renderings:
    save_rendering(r, out_dir)
print(f"wrote {len(renderings)} PNGs under {out_dir / mesh.object_id}")

# contact sheet: 2 elevation rows x 12 azimuth columns
tile = 112
sheet = Image.new("RGB", (12 * tile, 2 * tile))
for i, r in enumerate(renderings):
    img = Image.fromarray(r.pixels).resize((tile, tile))
    sheet.paste(img, ((i % 12) * tile, (i // 12) * tile))
sheet_path = out_dir / f"{mesh.object_id}_sheet.png"
sheet.save(sheet_path)
print(f"contact sheet: {sheet_path}")
