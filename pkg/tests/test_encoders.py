import numpy as np
import pytest
import torch

from printid.encoders import (
    PixelEncoder,
    SmallConvEncoder,
    cosine_similarity,
    cosine_similarity_matrix,
    load_checkpoint,
    probe_batch,
    save_checkpoint,
)
from printid.errors import CheckpointError, ShapeError, VersionMismatch, ZeroVector


class TestPixelEncoder:
    def test_gray_image_flattens_to_3072(self):
        enc = PixelEncoder(32)
        gray = np.full((32, 32), 100, dtype=np.uint8)  # 2-D grayscale input
        (emb,) = enc.encode([gray])
        assert emb.shape == (3072,)
        np.testing.assert_allclose(emb, 100 / 255.0, atol=1e-7)

    def test_identity_on_pixels(self, rng):
        enc = PixelEncoder(32)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        (emb,) = enc.encode([img])
        np.testing.assert_allclose(emb, img.reshape(-1) / 255.0, atol=1e-7)

    def test_single_pixel_difference_is_single_coordinate(self, rng):
        enc = PixelEncoder(32)
        a = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        b = a.copy()
        b[5, 7, 1] = (int(b[5, 7, 1]) + 50) % 256
        ea, eb = enc.encode([a, b])
        assert int((ea != eb).sum()) == 1

    def test_deterministic(self, rng):
        enc = PixelEncoder(32)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        (a,) = enc.encode([img])
        (b,) = enc.encode([img])
        assert np.array_equal(a, b)

    def test_resizes_larger_input(self, rng):
        enc = PixelEncoder(32)
        img = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
        (emb,) = enc.encode([img])
        assert emb.shape == (3072,)

    def test_wrong_channel_count(self):
        enc = PixelEncoder(32)
        with pytest.raises(ShapeError):
            enc.encode([np.zeros((32, 32, 4), dtype=np.uint8)])

    def test_empty_batch(self):
        enc = PixelEncoder(32)
        assert enc.encode([]).shape == (0, 3072)


class TestSmallConvEncoder:
    def test_parameter_budget(self):
        enc = SmallConvEncoder(dim=64, input_size_px=64)
        assert enc.n_parameters <= 1_000_000

    def test_eval_determinism(self, rng):
        enc = SmallConvEncoder(dim=16, input_size_px=32, seed=3)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        a = enc.encode([img])
        b = enc.encode([img])
        assert np.array_equal(a, b)

    def test_seed_controls_initialization(self, rng):
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        a = SmallConvEncoder(dim=16, input_size_px=32, seed=0).encode([img])
        b = SmallConvEncoder(dim=16, input_size_px=32, seed=1).encode([img])
        c = SmallConvEncoder(dim=16, input_size_px=32, seed=0).encode([img])
        assert not np.array_equal(a, b)
        assert np.array_equal(a, c)

    def test_batch_invariance(self, rng):
        enc = SmallConvEncoder(dim=16, input_size_px=32, seed=5)
        images = [rng.integers(0, 256, (32, 32, 3), dtype=np.uint8) for _ in range(6)]
        batched = enc.encode(images)
        singles = np.concatenate([enc.encode([im]) for im in images])
        np.testing.assert_allclose(batched, singles, atol=1e-5)


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_45_degrees(self):
        assert abs(cosine_similarity([1.0, 1.0], [1.0, 0.0]) - 0.70710678) < 1e-8

    def test_symmetric_and_scale_invariant(self, rng):
        for _ in range(50):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            alpha = float(rng.uniform(0.01, 100.0))
            assert abs(cosine_similarity(u, v) - cosine_similarity(v, u)) < 1e-9
            assert abs(cosine_similarity(alpha * u, v) - cosine_similarity(u, v)) < 1e-9

    def test_range(self, rng):
        for _ in range(100):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            assert -1.0 <= cosine_similarity(u, v) <= 1.0

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_matrix_agrees_with_pairwise(self, rng):
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(3, 6))
        m = cosine_similarity_matrix(a, b)
        for i in range(4):
            for j in range(3):
                assert abs(m[i, j] - cosine_similarity(a[i], b[j])) < 1e-12


class TestCheckpoints:
    def test_roundtrip_pixel(self, tmp_path):
        enc = PixelEncoder(32)
        path = save_checkpoint(enc, tmp_path / "pixel.ckpt")
        loaded = load_checkpoint(path)
        assert loaded.encoder_id == enc.encoder_id
        assert loaded.dim == enc.dim

    def test_roundtrip_smallconv_probe_exact(self, tmp_path):
        enc = SmallConvEncoder(dim=16, input_size_px=32, seed=9)
        path = save_checkpoint(enc, tmp_path / "conv.ckpt")
        loaded = load_checkpoint(path)
        probe = probe_batch(32)
        a = enc.encode(probe)
        b = loaded.encode(probe)
        assert np.abs(a - b).max() <= 1e-6

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_newer_version_rejected(self, tmp_path):
        enc = SmallConvEncoder(dim=16, input_size_px=32)
        path = save_checkpoint(enc, tmp_path / "conv.ckpt")
        payload = torch.load(path, map_location="cpu", weights_only=False)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)

    def test_corrupted_weights_detected_by_probe(self, tmp_path):
        enc = SmallConvEncoder(dim=16, input_size_px=32)
        path = save_checkpoint(enc, tmp_path / "conv.ckpt")
        payload = torch.load(path, map_location="cpu", weights_only=False)
        payload["state_dict"]["head.bias"] += 1.0
        torch.save(payload, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
