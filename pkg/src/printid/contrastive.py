"""One-time contrastive fine-tuning with rotation-aware positive pairs.

Each training sample is an anchor render of one object plus a positive
render of the same object from a viewpoint shifted by 30 degrees in azimuth
or elevation with a fresh in-plane rotation; the other objects' positives in
the batch act as negatives. The temperature-scaled softmax over cosine
similarities (InfoNCE) pulls each anchor toward its own positive.

``info_nce_loss`` is the single loss implementation: differentiable when fed
torch tensors, a plain float when fed arrays. Training uses AdamW and logs
one record per step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .encoders import Encoder
from .errors import DegenerateBatch, EmptyPool, InsufficientObjects, NonFinite, OverlapError
from .geometry import Mesh, ViewGrid, ViewpointSpec, expand_grid, neighbor_view
from .renderer import RenderConfig, Rendering, composite_background, render

__all__ = [
    "AugmentFlags",
    "TrainConfig",
    "PairBatch",
    "TrainingLog",
    "sample_pair_batch",
    "info_nce_loss",
    "train",
]


@dataclass(frozen=True)
class AugmentFlags:
    """Which augmentations apply when assembling pair batches."""

    color_jitter: bool = True
    random_crop: bool = True
    background_composite: bool = False
    rotation_positive: bool = True


@dataclass(frozen=True)
class TrainConfig:
    """Contrastive training hyperparameters.

    Defaults follow the reference setup (batch of 350 objects, AdamW at
    lr 1e-7); toy runs override ``batch_size``, ``learning_rate``, and
    ``steps``. ``steps`` caps the total number of optimization steps; when
    None, ``epochs`` passes over the object list determine it.
    """

    temperature: float = 0.07
    batch_size: int = 350
    learning_rate: float = 1e-7
    optimizer: str = "adamw"
    weight_decay: float = 0.01
    epochs: int = 1
    steps: int | None = None
    augment: AugmentFlags = field(default_factory=AugmentFlags)
    seed: int = 0
    view_shift_deg: float = 30.0
    azimuth_probability: float = 0.5
    symmetric: bool = False
    projection_head: bool = False  # train-time MLP on top of features, discarded after
    jitter_strength: float = 0.4
    crop_scale: tuple = (0.5, 1.0)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.optimizer not in ("adamw",):
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class PairBatch:
    """Aligned anchor/positive images over distinct objects."""

    anchors: list            # of (H, W, 3) uint8 arrays
    positives: list          # aligned
    object_ids: list
    anchor_viewpoints: list  # of ViewpointSpec (provenance)
    positive_viewpoints: list

    def __post_init__(self):
        n = len(self.anchors)
        if not (len(self.positives) == len(self.object_ids) == n):
            raise ValueError("anchors, positives, and object_ids must align")
        if len(set(self.object_ids)) != n:
            raise ValueError("object_ids within a batch must be distinct")

    @property
    def batch_size(self) -> int:
        return len(self.anchors)


def _color_jitter(img: np.ndarray, rng: np.random.Generator, strength: float) -> np.ndarray:
    """Brightness, contrast, and saturation each scaled by 1 +/- strength."""
    out = img.astype(np.float64)
    b, c, s = rng.uniform(1.0 - strength, 1.0 + strength, size=3)
    out = out * b
    out = out.mean() + (out - out.mean()) * c
    gray = out.mean(axis=2, keepdims=True)
    out = gray + (out - gray) * s
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def _random_crop(img: np.ndarray, rng: np.random.Generator, scale: tuple) -> np.ndarray:
    """Crop a random square covering ``scale`` of the area, resized back."""
    from PIL import Image

    size = img.shape[0]
    area = rng.uniform(scale[0], scale[1])
    side = max(1, int(round(size * np.sqrt(area))))
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    crop = img[top : top + side, left : left + side]
    if side == size:
        return crop
    return np.asarray(Image.fromarray(crop).resize((size, size), Image.BILINEAR))


def _augment(
    img: np.ndarray, rng: np.random.Generator, flags: AugmentFlags, config: TrainConfig
) -> np.ndarray:
    if flags.random_crop:
        img = _random_crop(img, rng, config.crop_scale)
    if flags.color_jitter:
        img = _color_jitter(img, rng, config.jitter_strength)
    return img


class _RenderCache:
    """Memo for deterministic flat-background renders, keyed by (id, view)."""

    def __init__(self, renderer_cfg: RenderConfig, max_entries: int = 4096):
        self.cfg = renderer_cfg
        self.max_entries = max_entries
        self._store: dict = {}

    def get(self, mesh: Mesh, viewpoint: ViewpointSpec) -> Rendering:
        key = (mesh.object_id, viewpoint)
        hit = self._store.get(key)
        if hit is None:
            hit = render(mesh, viewpoint, self.cfg)
            if len(self._store) < self.max_entries:
                self._store[key] = hit
        return hit


def sample_pair_batch(
    meshes: list[Mesh],
    config: TrainConfig,
    renderer_cfg: RenderConfig,
    step_seed: int,
    background_pool: list | None = None,
    _cache: _RenderCache | None = None,
) -> PairBatch:
    """Assemble one anchor/positive batch over ``config.batch_size`` distinct
    objects. Anchors come from the standard training grid; positives are
    30-degree neighbor views (or re-augmented anchor views when
    ``rotation_positive`` is off). Deterministic given ``step_seed``."""
    flags = config.augment
    bsz = config.batch_size
    if len({m.object_id for m in meshes}) < bsz:
        raise InsufficientObjects(
            f"need {bsz} distinct objects, have {len({m.object_id for m in meshes})}"
        )
    if flags.background_composite and not background_pool:
        raise EmptyPool("background_composite enabled but no background pool given")
    cache = _cache or _RenderCache(renderer_cfg)
    rng = np.random.default_rng(step_seed)
    chosen = rng.choice(len(meshes), size=bsz, replace=False)
    grid = expand_grid(ViewGrid())

    anchors, positives, ids, avps, pvps = [], [], [], [], []
    for idx in chosen:
        mesh = meshes[int(idx)]
        anchor_vp = grid[int(rng.integers(len(grid)))]
        if flags.rotation_positive:
            positive_vp = neighbor_view(
                anchor_vp,
                seed=int(rng.integers(2**63)),
                shift_deg=config.view_shift_deg,
                azimuth_probability=config.azimuth_probability,
            )
        else:
            positive_vp = anchor_vp
        anchor = cache.get(mesh, anchor_vp)
        positive = cache.get(mesh, positive_vp) if positive_vp == anchor_vp else render(
            mesh, positive_vp, renderer_cfg
        )
        a_img, p_img = anchor.pixels, positive.pixels
        if flags.background_composite:
            a_img = composite_background(anchor, background_pool, int(rng.integers(2**63))).pixels
            p_img = composite_background(positive, background_pool, int(rng.integers(2**63))).pixels
        a_img = _augment(a_img, np.random.default_rng(int(rng.integers(2**63))), flags, config)
        p_img = _augment(p_img, np.random.default_rng(int(rng.integers(2**63))), flags, config)
        anchors.append(a_img)
        positives.append(p_img)
        ids.append(mesh.object_id)
        avps.append(anchor_vp)
        pvps.append(positive_vp)
    return PairBatch(anchors, positives, ids, avps, pvps)


def _as_2d_tensor(x, name: str) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        t = x
    else:
        t = torch.as_tensor(np.asarray(x, dtype=np.float64))
    if t.ndim == 1:
        t = t.unsqueeze(0)
    if t.ndim != 2:
        raise ValueError(f"{name} must be (B, D), got shape {tuple(t.shape)}")
    return t


def info_nce_loss(anchor_embs, positive_embs, tau: float = 0.07):
    """Temperature-scaled contrastive loss over a batch of embedding pairs.

    For anchor i the candidate set is every positive in the batch; the
    (i, k) logit is the cosine similarity between anchor i and positive k
    divided by ``tau``, and the per-anchor loss is the negative log softmax
    of the matching entry. Returns the batch mean: a differentiable scalar
    tensor for tensor inputs, a plain float otherwise.
    """
    return_tensor = isinstance(anchor_embs, torch.Tensor) or isinstance(
        positive_embs, torch.Tensor
    )
    a = _as_2d_tensor(anchor_embs, "anchor_embs")
    p = _as_2d_tensor(positive_embs, "positive_embs")
    if a.shape != p.shape:
        raise ValueError(f"shape mismatch: anchors {tuple(a.shape)} vs positives {tuple(p.shape)}")
    if a.shape[0] < 2:
        raise DegenerateBatch(f"need batch size >= 2, got {a.shape[0]}")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    a_norm = a / a.norm(dim=1, keepdim=True)
    p_norm = p / p.norm(dim=1, keepdim=True)
    sims = a_norm @ p_norm.T  # (B, B); diagonal entries match anchors to their positives
    if not torch.isfinite(sims).all().item():
        raise NonFinite("non-finite similarity in contrastive batch")
    logits = sims / tau
    losses = torch.logsumexp(logits, dim=1) - torch.diagonal(logits)
    loss = losses.mean()
    if return_tensor:
        return loss
    return float(loss.item())


@dataclass
class TrainingLog:
    """Per-step records: step, loss, lr, seed, and the config digest."""

    records: list = field(default_factory=list)
    config_digest: str = ""

    def append(self, step: int, loss: float, lr: float, seed: int):
        self.records.append(
            {"step": step, "loss": loss, "lr": lr, "seed": seed, "config": self.config_digest}
        )

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records], dtype=np.float64)

    def smoothed_losses(self, window: int = 20) -> np.ndarray:
        """Trailing-mean losses; window shrinks at the start of the run."""
        losses = self.losses
        return np.array(
            [losses[max(0, i + 1 - window) : i + 1].mean() for i in range(len(losses))]
        )

    def save(self, path) -> None:
        from pathlib import Path

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def train(
    encoder: Encoder,
    meshes: list[Mesh],
    config: TrainConfig,
    background_pool: list | None = None,
    eval_object_ids=(),
    renderer_cfg: RenderConfig | None = None,
) -> tuple[Encoder, TrainingLog]:
    """Fine-tune a trainable encoder on rendered pair batches.

    ``eval_object_ids`` is the caller's held-out set: any overlap with the
    training meshes raises :class:`OverlapError` before any weight update.
    A non-finite loss aborts with its step index. Returns the (mutated)
    encoder and the per-step log.
    """
    if not getattr(encoder, "trainable", False):
        raise ValueError(f"encoder {encoder.encoder_id} is not trainable")
    overlap = {m.object_id for m in meshes} & set(eval_object_ids)
    if overlap:
        raise OverlapError(f"train/eval object ids intersect: {sorted(overlap)[:5]}")
    renderer_cfg = renderer_cfg or RenderConfig(
        image_size_px=max(32, encoder.input_size_px)
    )
    module: torch.nn.Module = encoder.module
    torch.manual_seed(config.seed)
    if config.projection_head:
        # Loss-side MLP in the SimCLR style; inference keeps backbone features.
        head: torch.nn.Module = torch.nn.Sequential(
            torch.nn.Linear(encoder.dim, 2 * encoder.dim),
            torch.nn.ReLU(inplace=True),
            torch.nn.Linear(2 * encoder.dim, encoder.dim),
        )
    else:
        head = torch.nn.Identity()
    params = list(module.parameters()) + list(head.parameters())
    optimizer = torch.optim.AdamW(
        params, lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps_per_epoch = max(1, len(meshes) // config.batch_size)
    total_steps = config.steps if config.steps is not None else config.epochs * steps_per_epoch
    log = TrainingLog(config_digest=config.digest())
    cache = _RenderCache(renderer_cfg)

    module.train()
    for step in range(total_steps):
        batch = sample_pair_batch(
            meshes,
            config,
            renderer_cfg,
            step_seed=_step_seed(config.seed, step),
            background_pool=background_pool,
            _cache=cache,
        )
        x_anchor = encoder.to_torch_batch(batch.anchors)
        x_positive = encoder.to_torch_batch(batch.positives)
        emb_anchor = head(module(x_anchor))
        emb_positive = head(module(x_positive))
        loss = info_nce_loss(emb_anchor, emb_positive, config.temperature)
        if config.symmetric:
            loss = 0.5 * (loss + info_nce_loss(emb_positive, emb_anchor, config.temperature))
        value = float(loss.item())
        if not np.isfinite(value):
            raise NonFinite(f"loss became non-finite at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        log.append(step, value, config.learning_rate, config.seed)
    module.eval()
    return encoder, log


def _step_seed(seed: int, step: int) -> int:
    """Stable per-step seed stream independent of worker layout."""
    blob = f"{seed}:{step}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1
