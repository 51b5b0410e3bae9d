"""The operator workflow over the HTTP service, end to end in-process.

Simulates a technician emptying a bin of ten printed parts: open a
session, photograph the part in hand (here: a fresh render from a random
viewpoint), review the ranked candidates restricted to the shrinking pool,
confirm the match, repeat. Finishes with an undo to show recovery from a
mis-confirmation.

Uses the in-process test client; `printid serve` exposes the same app over
a real port for the browser console in frontend/.

Run:  python3 demos/05_service_workflow.py
"""

import io
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from printid import (
    PixelEncoder,
    RenderConfig,
    SamplingStrategy,
    ViewpointSpec,
    build_set,
    render,
    sandbox_meshes,
)
from printid.prototypes import save_set
from printid.service import create_app

out_dir = Path("demo_output/service")
out_dir.mkdir(parents=True, exist_ok=True)
meshes = sandbox_meshes()
encoder = PixelEncoder(32)
config = RenderConfig(image_size_px=32)

cset = build_set(meshes, SamplingStrategy("uniform", 24), encoder, config, set_id="sandbox")
set_path = save_set(cset, out_dir / "sandbox.protoset")

app = create_app(encoder=encoder)
client = TestClient(app)
print("health:", client.get("/healthz").json())

with open(set_path, "rb") as fh:
    uploaded = client.post("/sets", files={"file": ("sandbox.protoset", fh.read())}).json()
print("uploaded set:", uploaded)

session = client.post("/sessions", json={"set_id": "sandbox"}).json()
sid = session["session_id"]
print(f"session {sid}: {session['remaining']} objects in the bin\n")

rng = np.random.default_rng(4)
for step, mesh in enumerate(rng.permutation(meshes), 1):
    viewpoint = ViewpointSpec(rng.uniform(0, 360), float(rng.choice([30, 45, 60])))
    photo = render(mesh, viewpoint, config).pixels
    buf = io.BytesIO()
    Image.fromarray(photo).save(buf, format="PNG")
    body = client.post(
        f"/sessions/{sid}/classify",
        files=[("images", ("shot.png", buf.getvalue(), "image/png"))],
        data={"top_k": "3"},
    ).json()
    candidates = body["candidates"]
    top1 = candidates[0]["object_id"]
    shown = ", ".join(f"{c['object_id']}({c['score']:.3f})" for c in candidates)
    verdict = "ok" if top1 == mesh.object_id else f"MISMATCH (true {mesh.object_id})"
    confirm = client.post(f"/sessions/{sid}/confirm", json={"object_id": top1}).json()
    print(f"pick {step:2d}: candidates [{shown}] -> confirm {top1} "
          f"[{verdict}], {confirm['remaining']} left")

state = client.get(f"/sessions/{sid}").json()
print(f"\nbin empty: remaining={state['remaining']}, confirmed={len(state['history'])}")

undone = client.post(f"/sessions/{sid}/undo").json()
print(f"undo: restored {undone['restored']!r}, remaining={undone['remaining']}")
