"""Deterministic software rasterizer for normalized meshes.

The camera sits on a sphere of configurable radius around the origin at the
viewpoint's (azimuth, elevation), looks at the origin, and applies the
in-plane angle as roll. Faces are flat-shaded with a single headlight
(Lambertian, double-sided) against a flat mid-gray background, which keeps
renders a pure function of their inputs. Background compositing for training
augmentation swaps the mask-0 pixels for a randomly cropped pool image.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyPool, RenderError
from .geometry import Mesh, ViewpointSpec

__all__ = [
    "RenderConfig",
    "Rendering",
    "render",
    "render_batch",
    "composite_background",
    "camera_basis",
    "save_rendering",
    "rendering_filename",
]

_AMBIENT = 0.12
_BACKGROUND_GRAY = 128


@dataclass(frozen=True)
class RenderConfig:
    """Rendering parameters. Defaults target a white-PA12-like matte object
    filling most of a square frame."""

    image_size_px: int = 224
    camera_distance: float = 2.5  # multiples of the unit bounding-sphere radius
    field_of_view_deg: float = 45.0
    light_direction: tuple | None = None  # unit 3-vector; None = headlight from camera
    material_albedo: float = 0.9
    background: str = "flat_gray"  # "flat_gray" | "composite"

    def __post_init__(self):
        if self.image_size_px < 32:
            raise ValueError(f"image_size_px must be >= 32, got {self.image_size_px}")
        if self.camera_distance <= 1.0:
            raise ValueError("camera_distance must exceed the unit bounding sphere (> 1.0)")
        if not 0.0 < self.field_of_view_deg < 180.0:
            raise ValueError(f"field_of_view_deg out of range: {self.field_of_view_deg}")
        if not 0.0 <= self.material_albedo <= 1.0:
            raise ValueError(f"material_albedo must be in [0, 1]: {self.material_albedo}")
        if self.background not in ("flat_gray", "composite"):
            raise ValueError(f"unknown background mode: {self.background}")


@dataclass(frozen=True)
class Rendering:
    """One rendered view: 8-bit RGB pixels plus a boolean foreground mask."""

    object_id: str
    viewpoint: ViewpointSpec
    pixels: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray    # (H, W) bool


def camera_basis(viewpoint: ViewpointSpec, distance: float):
    """Camera position and orthonormal axes (right, up, toward-camera) for a
    viewpoint on the sphere of the given radius, with roll applied.

    World frame: +Z up, azimuth rotates about Z starting from +X, elevation
    lifts toward +Z. The camera looks down its -Z axis at the origin.
    """
    az = np.deg2rad(viewpoint.azimuth_deg)
    el = np.deg2rad(viewpoint.elevation_deg)
    z_cam = np.array(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], dtype=np.float64
    )
    position = distance * z_cam
    # Azimuth tangent stays well-defined at the pole, unlike cross(z, world_up).
    x_cam = np.array([-np.sin(az), np.cos(az), 0.0], dtype=np.float64)
    y_cam = np.cross(z_cam, x_cam)
    roll = np.deg2rad(viewpoint.inplane_deg)
    c, s = np.cos(roll), np.sin(roll)
    x_rolled = c * x_cam + s * y_cam
    y_rolled = -s * x_cam + c * y_cam
    return position, x_rolled, y_rolled, z_cam


def render(
    mesh: Mesh,
    viewpoint: ViewpointSpec,
    config: RenderConfig = RenderConfig(),
    seed: int = 0,
) -> Rendering:
    """Rasterize one view of a normalized mesh.

    Pure function of its inputs; ``seed`` is part of the interface for
    stochastic shading variants but flat shading ignores it.
    """
    del seed  # reserved
    size = config.image_size_px
    position, x_cam, y_cam, z_cam = camera_basis(viewpoint, config.camera_distance)
    rot = np.stack([x_cam, y_cam, z_cam])  # world -> camera rows
    if not np.all(np.isfinite(rot)) or abs(np.linalg.det(rot)) < 1e-9:
        raise RenderError(f"degenerate camera configuration at {viewpoint}")

    verts_cam = (mesh.vertices - position) @ rot.T
    depth = -verts_cam[:, 2]
    if np.any(depth <= 1e-9):
        raise RenderError(
            "mesh vertices at or behind the camera plane; is the mesh normalized?"
        )

    focal = 1.0 / np.tan(np.deg2rad(config.field_of_view_deg) / 2.0)
    ndc_x = focal * verts_cam[:, 0] / depth
    ndc_y = focal * verts_cam[:, 1] / depth
    px = (ndc_x + 1.0) * 0.5 * size
    py = (1.0 - ndc_y) * 0.5 * size
    inv_depth = 1.0 / depth

    if config.light_direction is None:
        light = z_cam  # headlight: from the surface toward the camera
    else:
        light = np.asarray(config.light_direction, dtype=np.float64)
        norm = np.linalg.norm(light)
        if norm < 1e-12:
            raise RenderError("light_direction must be a nonzero vector")
        light = light / norm

    # Flat shade per face, double-sided so winding inconsistencies stay visible.
    tri = mesh.vertices[mesh.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    lengths[lengths < 1e-15] = 1.0
    lambert = np.abs(normals @ light) / lengths
    shade = config.material_albedo * (_AMBIENT + (1.0 - _AMBIENT) * lambert)
    gray = np.clip(np.round(shade * 255.0), 0, 255).astype(np.uint8)

    img = np.zeros((size, size), dtype=np.uint8)
    zbuf = np.zeros((size, size), dtype=np.float64)  # stores 1/depth; 0 = empty

    fx = px[mesh.faces]  # (F, 3)
    fy = py[mesh.faces]
    fw = inv_depth[mesh.faces]
    x0 = np.clip(np.floor(fx.min(axis=1)).astype(np.int64), 0, size)
    x1 = np.clip(np.ceil(fx.max(axis=1)).astype(np.int64), 0, size)
    y0 = np.clip(np.floor(fy.min(axis=1)).astype(np.int64), 0, size)
    y1 = np.clip(np.ceil(fy.max(axis=1)).astype(np.int64), 0, size)

    for f in range(len(mesh.faces)):
        if x0[f] >= x1[f] or y0[f] >= y1[f]:
            continue
        ax, bx, cx = fx[f]
        ay, by, cy = fy[f]
        det = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if abs(det) < 1e-12:
            continue
        xs = np.arange(x0[f], x1[f], dtype=np.float64) + 0.5
        ys = np.arange(y0[f], y1[f], dtype=np.float64) + 0.5
        sx = xs[None, :] - cx
        sy = ys[:, None] - cy
        b0 = ((by - cy) * sx + (cx - bx) * sy) / det
        b1 = ((cy - ay) * sx + (ax - cx) * sy) / det
        b2 = 1.0 - b0 - b1
        inside = (b0 >= 0.0) & (b1 >= 0.0) & (b2 >= 0.0)
        if not inside.any():
            continue
        w = b0 * fw[f, 0] + b1 * fw[f, 1] + b2 * fw[f, 2]
        region = (slice(y0[f], y1[f]), slice(x0[f], x1[f]))
        closer = inside & (w > zbuf[region])
        zbuf[region][closer] = w[closer]
        img[region][closer] = gray[f]

    mask = zbuf > 0.0
    pixels = np.full((size, size, 3), _BACKGROUND_GRAY, dtype=np.uint8)
    pixels[mask] = img[mask, None]
    return Rendering(object_id=mesh.object_id, viewpoint=viewpoint, pixels=pixels, mask=mask)


def render_batch(
    mesh: Mesh,
    viewpoints: list[ViewpointSpec],
    config: RenderConfig = RenderConfig(),
    workers: int | None = None,
) -> list[Rendering]:
    """Render every viewpoint, preserving order. ``workers`` > 1 renders in
    parallel threads; outputs are identical either way. A failure is re-raised
    with the offending viewpoint index."""

    def one(item):
        i, vp = item
        try:
            return render(mesh, vp, config)
        except RenderError as exc:
            raise RenderError(f"viewpoint {i}: {exc}") from exc

    items = list(enumerate(viewpoints))
    if workers is not None and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]


def composite_background(
    r: Rendering, background_pool: list[np.ndarray], seed: int
) -> Rendering:
    """Replace the background (mask = 0) with a random crop of a random pool
    image. Foreground pixels are untouched. Deterministic given ``seed``."""
    if not background_pool:
        raise EmptyPool("background pool is empty")
    h, w = r.mask.shape
    rng = np.random.default_rng(seed)
    bg = np.asarray(background_pool[int(rng.integers(len(background_pool)))])
    if bg.ndim == 2:
        bg = np.repeat(bg[:, :, None], 3, axis=2)
    if bg.shape[0] < h or bg.shape[1] < w:
        raise EmptyPool(
            f"background image {bg.shape[:2]} smaller than render {(h, w)}"
        )
    top = int(rng.integers(bg.shape[0] - h + 1))
    left = int(rng.integers(bg.shape[1] - w + 1))
    crop = bg[top : top + h, left : left + w, :3].astype(np.uint8)
    pixels = r.pixels.copy()
    pixels[~r.mask] = crop[~r.mask]
    return Rendering(object_id=r.object_id, viewpoint=r.viewpoint, pixels=pixels, mask=r.mask)


def rendering_filename(viewpoint: ViewpointSpec) -> str:
    """Canonical file name ``<elev>_<azim>_<inplane>.png`` for one view."""
    return "{:g}_{:g}_{:g}.png".format(
        viewpoint.elevation_deg, viewpoint.azimuth_deg, viewpoint.inplane_deg
    )


def save_rendering(r: Rendering, root: str | Path) -> Path:
    """Write a render as PNG under ``root/<object_id>/<elev>_<azim>_<inplane>.png``."""
    out_dir = Path(root) / r.object_id
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / rendering_filename(r.viewpoint)
    Image.fromarray(r.pixels).save(path)
    return path
