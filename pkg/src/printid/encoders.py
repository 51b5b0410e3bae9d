"""Feature extractors behind a single ``encode`` interface.

Three families cover the pipeline's needs:

* :class:`PixelEncoder` — deterministic downsampled-pixel features; the
  ground-truth oracle for tests and the sandbox.
* :class:`SmallConvEncoder` — a compact trainable CNN (~0.1M parameters) for
  desk-scale contrastive experiments.
* :class:`PretrainedEncoder` — adapter over torchvision / torch.hub
  backbones (requires downloaded weights).

Embeddings are plain ``(N, D)`` float32 arrays, stored unnormalized;
normalization happens inside cosine similarity. Checkpoints are versioned
containers that carry a probe-batch fingerprint so a round trip can be
verified bit-for-bit within 1e-6.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import CheckpointError, ShapeError, VersionMismatch, ZeroVector

__all__ = [
    "Encoder",
    "PixelEncoder",
    "SmallConvEncoder",
    "PretrainedEncoder",
    "encode",
    "cosine_similarity",
    "cosine_similarity_matrix",
    "save_checkpoint",
    "load_checkpoint",
    "probe_batch",
]

CHECKPOINT_FORMAT_VERSION = 1


def _to_rgb_array(image) -> np.ndarray:
    """Coerce an input image (ndarray, PIL image, or Rendering) to (H, W, 3) uint8."""
    pixels = getattr(image, "pixels", image)  # Rendering -> its pixel buffer
    if isinstance(pixels, Image.Image):
        pixels = np.asarray(pixels.convert("RGB"))
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) or (H, W) image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    return arr


def _resize(arr: np.ndarray, size: int) -> np.ndarray:
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    img = Image.fromarray(arr).resize((size, size), Image.BILINEAR)
    return np.asarray(img)


class Encoder:
    """Common interface: ``encode`` maps a list of images to (N, D) float32."""

    encoder_id: str
    dim: int
    trainable: bool
    input_size_px: int
    weights_ref: str = ""  # opaque provenance: builtin config, seed, or checkpoint path

    def preprocess(self, images) -> np.ndarray:
        """Images -> (N, size, size, 3) float32 in [0, 1]."""
        arrs = [_resize(_to_rgb_array(im), self.input_size_px) for im in images]
        if not arrs:
            return np.zeros((0, self.input_size_px, self.input_size_px, 3), dtype=np.float32)
        return np.stack(arrs).astype(np.float32) / 255.0

    def encode(self, images) -> np.ndarray:
        raise NotImplementedError

    def _check_output(self, out: np.ndarray) -> np.ndarray:
        out = np.asarray(out, dtype=np.float32)
        if not np.all(np.isfinite(out)):
            raise ShapeError(f"{self.encoder_id}: non-finite embedding values")
        return out


class PixelEncoder(Encoder):
    """Identity-on-pixels oracle: resize, scale to [0, 1], flatten."""

    def __init__(self, input_size_px: int = 32, encoder_id: str | None = None):
        self.input_size_px = int(input_size_px)
        self.dim = self.input_size_px * self.input_size_px * 3
        self.trainable = False
        self.encoder_id = encoder_id or f"pixel{self.input_size_px}"
        self.weights_ref = f"builtin:pixel:{self.input_size_px}"

    def encode(self, images) -> np.ndarray:
        batch = self.preprocess(images)
        if len(batch) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        return self._check_output(batch.reshape(len(batch), -1))


class _SmallConvNet(torch.nn.Module):
    """Four strided convs with group norm, pooled to a linear head."""

    def __init__(self, dim: int):
        super().__init__()
        chans = [3, 16, 32, 64, 128]
        layers = []
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            layers += [
                torch.nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
                torch.nn.GroupNorm(4, c_out),
                torch.nn.ReLU(inplace=True),
            ]
        self.features = torch.nn.Sequential(*layers)
        self.pool = torch.nn.AdaptiveAvgPool2d(1)
        self.head = torch.nn.Linear(chans[-1], dim)

    def forward(self, x):
        x = self.features(x)
        x = self.pool(x).flatten(1)
        return self.head(x)


class SmallConvEncoder(Encoder):
    """Trainable compact CNN; weights initialized deterministically from ``seed``."""

    def __init__(
        self,
        dim: int = 64,
        input_size_px: int = 64,
        seed: int = 0,
        encoder_id: str | None = None,
    ):
        self.input_size_px = int(input_size_px)
        self.dim = int(dim)
        self.trainable = True
        self.seed = int(seed)
        self.encoder_id = encoder_id or f"smallconv{self.input_size_px}-d{self.dim}"
        self.weights_ref = f"init:seed={self.seed}"
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            self.module = _SmallConvNet(self.dim)
        self.module.eval()

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    def to_torch_batch(self, images) -> torch.Tensor:
        """(N, 3, size, size) float32 tensor in [0, 1], gradient-ready."""
        batch = self.preprocess(images)
        return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous()

    def encode(self, images) -> np.ndarray:
        x = self.to_torch_batch(images)
        if len(x) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        self.module.eval()
        with torch.no_grad():
            out = self.module(x)
        return self._check_output(out.numpy())


class PretrainedEncoder(Encoder):
    """Adapter over a pretrained backbone (torchvision name or torch.hub spec).

    ``backbone`` accepts ``"resnet50"`` (torchvision, final pooled features)
    or a ``"hub:<repo>:<model>"`` spec such as
    ``"hub:facebookresearch/dinov2:dinov2_vitb14"``. Weights are downloaded
    on first use; a failed resolution raises :class:`CheckpointError`.
    """

    _IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    _IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

    def __init__(
        self,
        backbone: str = "resnet50",
        trainable: bool = False,
        input_size_px: int = 224,
        encoder_id: str | None = None,
    ):
        self.backbone = backbone
        self.input_size_px = int(input_size_px)
        self.trainable = bool(trainable)
        self.encoder_id = encoder_id or backbone.replace(":", "-").replace("/", "-")
        self.weights_ref = backbone
        self.module = self._load_backbone(backbone)
        self.module.eval()
        with torch.no_grad():
            probe = torch.zeros(1, 3, self.input_size_px, self.input_size_px)
            self.dim = int(self.module(probe).shape[-1])

    @staticmethod
    def _load_backbone(backbone: str) -> torch.nn.Module:
        try:
            if backbone.startswith("hub:"):
                _, repo, model = backbone.split(":", 2)
                return torch.hub.load(repo, model)
            import torchvision.models as tvm

            ctor = getattr(tvm, backbone)
            net = ctor(weights="DEFAULT")
            if hasattr(net, "fc"):  # strip the classification head
                net.fc = torch.nn.Identity()
            elif hasattr(net, "classifier"):
                net.classifier = torch.nn.Identity()
            return net
        except Exception as exc:
            raise CheckpointError(f"cannot resolve backbone {backbone!r}: {exc}") from exc

    def to_torch_batch(self, images) -> torch.Tensor:
        batch = self.preprocess(images)
        batch = (batch - self._IMAGENET_MEAN) / self._IMAGENET_STD
        return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous()

    def encode(self, images) -> np.ndarray:
        x = self.to_torch_batch(images)
        if len(x) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        self.module.eval()
        with torch.no_grad():
            out = self.module(x)
        return self._check_output(out.numpy())


def encode(encoder: Encoder, images) -> np.ndarray:
    """Encode a list of images; one row per image, order-preserving."""
    return encoder.encode(images)


def cosine_similarity(u, v) -> float:
    """Cosine similarity of two vectors; raises :class:`ZeroVector` on zero norm."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities: (n, D) x (m, D) -> (n, m) float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return np.clip((a / na) @ (b / nb).T, -1.0, 1.0)


def probe_batch(input_size_px: int, n: int = 4, seed: int = 7) -> list[np.ndarray]:
    """Fixed pseudorandom uint8 images used to fingerprint encoder weights."""
    rng = np.random.default_rng(seed)
    return [
        rng.integers(0, 256, size=(input_size_px, input_size_px, 3), dtype=np.uint8)
        for _ in range(n)
    ]


def save_checkpoint(encoder: Encoder, path: str | Path) -> Path:
    """Write a versioned checkpoint with config, weights, and probe embeddings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(encoder, PixelEncoder):
        family, config, state = "pixel", {"input_size_px": encoder.input_size_px}, None
    elif isinstance(encoder, SmallConvEncoder):
        family = "smallconv"
        config = {
            "dim": encoder.dim,
            "input_size_px": encoder.input_size_px,
            "seed": encoder.seed,
        }
        state = encoder.module.state_dict()
    elif isinstance(encoder, PretrainedEncoder):
        family = "pretrained"
        config = {
            "backbone": encoder.backbone,
            "trainable": encoder.trainable,
            "input_size_px": encoder.input_size_px,
        }
        state = encoder.module.state_dict()
    else:
        raise CheckpointError(f"cannot checkpoint encoder type {type(encoder).__name__}")
    probe = torch.from_numpy(encoder.encode(probe_batch(encoder.input_size_px)))
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "family": family,
        "encoder_id": encoder.encoder_id,
        "dim": encoder.dim,
        "config": config,
        "state_dict": state,
        "probe_embeddings": probe,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> Encoder:
    """Reconstruct an encoder from a checkpoint and verify its probe batch.

    Raises ``FileNotFoundError`` on a missing file, :class:`VersionMismatch`
    on a newer format version, and :class:`CheckpointError` if the restored
    encoder does not reproduce the stored probe embeddings within 1e-6.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if not isinstance(version, int) or version > CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format {version!r} newer than supported {CHECKPOINT_FORMAT_VERSION}"
        )
    family = payload.get("family")
    config = payload.get("config", {})
    if family == "pixel":
        encoder: Encoder = PixelEncoder(
            input_size_px=config["input_size_px"], encoder_id=payload["encoder_id"]
        )
    elif family == "smallconv":
        encoder = SmallConvEncoder(encoder_id=payload["encoder_id"], **config)
        encoder.module.load_state_dict(payload["state_dict"])
        encoder.module.eval()
    elif family == "pretrained":
        encoder = PretrainedEncoder(encoder_id=payload["encoder_id"], **config)
        encoder.module.load_state_dict(payload["state_dict"])
        encoder.module.eval()
    else:
        raise CheckpointError(f"unknown encoder family {family!r} in {path}")
    stored = payload["probe_embeddings"].numpy()
    fresh = encoder.encode(probe_batch(encoder.input_size_px))
    if stored.shape != fresh.shape or np.abs(stored - fresh).max() > 1e-6:
        raise CheckpointError(f"probe-batch mismatch after loading {path}")
    encoder.weights_ref = str(path)
    return encoder
