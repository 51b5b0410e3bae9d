import numpy as np
import pytest

from printid.errors import EmptyPool
from printid.geometry import Mesh, ViewGrid, ViewpointSpec, expand_grid, normalize_mesh
from printid.renderer import (
    RenderConfig,
    composite_background,
    render,
    render_batch,
    rendering_filename,
    save_rendering,
)
from printid.sandbox import make_primitive


def _square_mesh(tilt_deg: float) -> Mesh:
    """Unit square in the YZ plane (normal +X), tilted about the Y axis."""
    t = np.deg2rad(tilt_deg)
    pts = np.array([[0, -1, -1], [0, 1, -1], [0, 1, 1], [0, -1, 1]], dtype=float)
    rot = np.array(
        [[np.cos(t), 0, np.sin(t)], [0, 1, 0], [-np.sin(t), 0, np.cos(t)]]
    )
    return normalize_mesh(Mesh("square", pts @ rot.T, np.array([[0, 1, 2], [0, 2, 3]])))


def _projected_area_oracle(tilt_deg, distance, fov_deg=45.0, n=1500):
    """Exact projected area of the tilted square via Jacobian quadrature."""
    a = 1 / np.sqrt(2)  # half-extent after normalization
    f = 1.0 / np.tan(np.deg2rad(fov_deg) / 2)
    t = np.deg2rad(tilt_deg)
    u = ((np.arange(n) + 0.5) / n * 2 - 1) * a
    v = ((np.arange(n) + 0.5) / n * 2 - 1) * a
    U, V = np.meshgrid(u, v)
    X, Y, Z = np.sin(t) * V, U, np.cos(t) * V
    depth = distance - X
    sx, sy = f * Y / depth, f * Z / depth
    jac = np.abs(
        np.gradient(sx, axis=1) * np.gradient(sy, axis=0)
        - np.gradient(sx, axis=0) * np.gradient(sy, axis=1)
    )
    return jac.sum()


class TestRender:
    def test_sphere_mask_is_centered_disk_and_deterministic(self):
        sphere = make_primitive("sphere")
        cfg = RenderConfig(image_size_px=96)
        vp = ViewpointSpec(73.0, 21.0)
        first = render(sphere, vp, cfg)
        second = render(sphere, vp, cfg)
        assert np.array_equal(first.pixels, second.pixels)
        assert np.array_equal(first.mask, second.mask)
        ys, xs = np.nonzero(first.mask)
        center = (first.mask.shape[0] - 1) / 2
        assert abs(xs.mean() - center) < 1.0
        assert abs(ys.mean() - center) < 1.0
        # circular: width equals height
        assert abs((xs.max() - xs.min()) - (ys.max() - ys.min())) <= 2

    def test_cube_four_fold_symmetry_at_equator(self):
        cube = make_primitive("cube")
        cfg = RenderConfig(image_size_px=64)
        a = render(cube, ViewpointSpec(0, 0), cfg)
        b = render(cube, ViewpointSpec(90, 0), cfg)
        assert np.array_equal(a.pixels, b.pixels)

    def test_projected_area_matches_cosine_law(self):
        # Weak perspective (distance 5): mask area ratio of a 60-degree tilt
        # approaches cos(60) = 0.5.
        cfg = RenderConfig(image_size_px=256, camera_distance=5.0)
        facing = render(_square_mesh(0), ViewpointSpec(0, 0), cfg)
        tilted = render(_square_mesh(60), ViewpointSpec(0, 0), cfg)
        ratio = tilted.mask.sum() / facing.mask.sum()
        assert abs(ratio - 0.5) < 0.05

    def test_projected_area_matches_exact_perspective_oracle(self):
        # At the default distance the exact perspective ratio is ~0.566;
        # the rasterized mask must agree with the quadrature oracle.
        cfg = RenderConfig(image_size_px=512, camera_distance=2.5)
        facing = render(_square_mesh(0), ViewpointSpec(0, 0), cfg)
        tilted = render(_square_mesh(60), ViewpointSpec(0, 0), cfg)
        ratio = tilted.mask.sum() / facing.mask.sum()
        oracle = _projected_area_oracle(60, 2.5) / _projected_area_oracle(0, 2.5)
        assert abs(ratio - oracle) < 0.02

    def test_viewpoint_sensitivity(self):
        tetra = make_primitive("tetrahedron")
        cfg = RenderConfig(image_size_px=64)
        a = render(tetra, ViewpointSpec(0, 30), cfg)
        b = render(tetra, ViewpointSpec(90, 30), cfg)
        diff = (a.pixels != b.pixels).any(axis=2).mean()
        assert diff >= 0.01

    def test_roll_rotates_image(self):
        tetra = make_primitive("tetrahedron")
        cfg = RenderConfig(image_size_px=64)
        a = render(tetra, ViewpointSpec(10, 30, 0), cfg)
        b = render(tetra, ViewpointSpec(10, 30, 90), cfg)
        assert (a.pixels != b.pixels).any()

    def test_mask_nonempty_across_viewpoints_and_distances(self):
        mesh = make_primitive("dumbbell")
        for distance in (1.2, 2.5, 6.0):
            cfg = RenderConfig(image_size_px=48, camera_distance=distance)
            for vp in (ViewpointSpec(0, 0), ViewpointSpec(123, 45), ViewpointSpec(300, 90)):
                assert render(mesh, vp, cfg).mask.any()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RenderConfig(image_size_px=16)
        with pytest.raises(ValueError):
            RenderConfig(camera_distance=0.9)
        with pytest.raises(ValueError):
            RenderConfig(background="checkerboard")


class TestRenderBatch:
    def test_grid_order_and_count(self):
        mesh = make_primitive("cone")
        views = expand_grid(ViewGrid())
        cfg = RenderConfig(image_size_px=32)
        out = render_batch(mesh, views, cfg)
        assert len(out) == 24
        assert [r.viewpoint for r in out] == views

    def test_empty_list(self):
        assert render_batch(make_primitive("cone"), [], RenderConfig(image_size_px=32)) == []

    def test_parallel_matches_sequential(self):
        mesh = make_primitive("torus")
        views = expand_grid(ViewGrid(elevations_deg=(30,), azimuth_step_deg=60))
        cfg = RenderConfig(image_size_px=32)
        seq = render_batch(mesh, views, cfg)
        par = render_batch(mesh, views, cfg, workers=4)
        for a, b in zip(seq, par):
            assert np.array_equal(a.pixels, b.pixels)
            assert np.array_equal(a.mask, b.mask)


class TestCompositeBackground:
    def test_solid_red_pool(self):
        r = render(make_primitive("cube"), ViewpointSpec(40, 30), RenderConfig(image_size_px=32))
        red = np.zeros((64, 64, 3), dtype=np.uint8)
        red[:, :, 0] = 255
        out = composite_background(r, [red], seed=0)
        assert np.array_equal(out.pixels[~out.mask], np.tile([255, 0, 0], ((~out.mask).sum(), 1)))
        assert np.array_equal(out.pixels[out.mask], r.pixels[r.mask])

    def test_full_mask_leaves_input_unchanged(self):
        r = render(make_primitive("cube"), ViewpointSpec(40, 30), RenderConfig(image_size_px=32))
        full = type(r)(r.object_id, r.viewpoint, r.pixels, np.ones_like(r.mask))
        out = composite_background(full, [np.zeros((32, 32, 3), np.uint8)], seed=3)
        assert np.array_equal(out.pixels, r.pixels)

    def test_deterministic(self, rng):
        r = render(make_primitive("torus"), ViewpointSpec(10, 60), RenderConfig(image_size_px=32))
        pool = [rng.integers(0, 255, (48, 48, 3), dtype=np.uint8) for _ in range(4)]
        a = composite_background(r, pool, seed=11)
        b = composite_background(r, pool, seed=11)
        assert np.array_equal(a.pixels, b.pixels)

    def test_foreground_never_altered(self, rng):
        r = render(make_primitive("cone"), ViewpointSpec(200, 45), RenderConfig(image_size_px=32))
        pool = [rng.integers(0, 255, (40, 40, 3), dtype=np.uint8) for _ in range(3)]
        for seed in range(25):
            out = composite_background(r, pool, seed=seed)
            assert np.array_equal(out.pixels[r.mask], r.pixels[r.mask])

    def test_empty_pool(self):
        r = render(make_primitive("cube"), ViewpointSpec(0, 30), RenderConfig(image_size_px=32))
        with pytest.raises(EmptyPool):
            composite_background(r, [], seed=0)

    def test_small_background_rejected(self):
        r = render(make_primitive("cube"), ViewpointSpec(0, 30), RenderConfig(image_size_px=64))
        with pytest.raises(EmptyPool):
            composite_background(r, [np.zeros((32, 32, 3), np.uint8)], seed=0)


class TestSaveRendering:
    def test_directory_layout(self, tmp_path):
        r = render(make_primitive("cube"), ViewpointSpec(120, 60, 15), RenderConfig(image_size_px=32))
        path = save_rendering(r, tmp_path / "renders")
        assert path == tmp_path / "renders" / "cube" / "60_120_15.png"
        assert path.exists()

    def test_filename_format(self):
        assert rendering_filename(ViewpointSpec(30, 60)) == "60_30_0.png"
