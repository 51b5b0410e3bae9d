"""Per-object prototype vectors and swappable classification sets.

A prototype is the arithmetic mean of an object's view embeddings; a
classification set maps object ids to prototypes and is the unit swapped in
and out at deployment without touching the encoder. Set files are versioned
binary containers with a SHA-256 digest so truncation and stale
encoder/render pairings are detectable.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoders import Encoder
from .errors import DigestMismatch, DuplicateObjectId, InvalidStrategy, VersionMismatch
from .geometry import Mesh, ViewpointSpec
from .renderer import RenderConfig, render_batch

__all__ = [
    "SamplingStrategy",
    "Prototype",
    "ClassificationSet",
    "sample_viewpoints",
    "build_prototype",
    "build_set",
    "save_set",
    "load_set",
    "render_config_digest",
]

SET_FORMAT_VERSION = 1
_MAGIC = b"PROTOSET\n"


@dataclass(frozen=True)
class SamplingStrategy:
    """How to choose the ``n_views`` camera viewpoints for one object.

    ``uniform`` spaces azimuths evenly from 0 and splits views equally
    across the listed elevations; ``random`` draws azimuths uniformly in
    [0, 360) and elevations uniformly from the allowed set, seeded.
    """

    mode: str = "uniform"  # "uniform" | "random"
    n_views: int = 24
    elevations_deg: tuple = (30.0, 60.0)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("uniform", "random"):
            raise InvalidStrategy(f"unknown sampling mode {self.mode!r}")
        object.__setattr__(self, "elevations_deg", tuple(float(e) for e in self.elevations_deg))

    def label(self) -> str:
        elevs = "+".join(f"{e:g}" for e in self.elevations_deg)
        return f"{self.mode}[{elevs}]"


def sample_viewpoints(strategy: SamplingStrategy, seed: int | None = None) -> list[ViewpointSpec]:
    """Expand a strategy into a concrete viewpoint list.

    Uniform mode is fully deterministic (azimuths start at 0, elevations in
    listed order); random mode is deterministic given the seed (``seed``
    overrides ``strategy.seed`` when given). Raises
    :class:`InvalidStrategy` when ``n_views`` does not split evenly across
    elevations in uniform mode.
    """
    n = strategy.n_views
    if n < 1:
        raise InvalidStrategy(f"n_views must be >= 1, got {n}")
    if not strategy.elevations_deg:
        raise InvalidStrategy("need at least one elevation")
    if strategy.mode == "uniform":
        n_elev = len(strategy.elevations_deg)
        if n % n_elev != 0:
            raise InvalidStrategy(
                f"uniform mode cannot split {n} views evenly over {n_elev} elevations"
            )
        per = n // n_elev
        step = 360.0 / per
        return [
            ViewpointSpec(azimuth_deg=i * step, elevation_deg=el)
            for el in strategy.elevations_deg
            for i in range(per)
        ]
    rng = np.random.default_rng(strategy.seed if seed is None else seed)
    azimuths = rng.uniform(0.0, 360.0, size=n)
    elev_idx = rng.integers(0, len(strategy.elevations_deg), size=n)
    return [
        ViewpointSpec(azimuth_deg=float(az), elevation_deg=strategy.elevations_deg[int(i)])
        for az, i in zip(azimuths, elev_idx)
    ]


@dataclass(frozen=True)
class Prototype:
    """Mean embedding of one object's rendered views, with provenance."""

    object_id: str
    vector: np.ndarray  # (D,) float32
    K: int
    viewpoints: tuple
    encoder_id: str

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vector, dtype=np.float32))
        if v.ndim != 1:
            raise ValueError(f"prototype vector must be 1-D, got {v.shape}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "viewpoints", tuple(self.viewpoints))


@dataclass
class ClassificationSet:
    """Named, immutable-once-built collection of prototypes."""

    set_id: str
    prototypes: dict  # object_id -> Prototype, insertion-ordered
    encoder_id: str
    render_config_digest: str = ""
    created_at: float = field(default_factory=time.time)

    def __post_init__(self):
        dims = {p.vector.shape[0] for p in self.prototypes.values()}
        if len(dims) > 1:
            raise ValueError(f"prototypes disagree on dimension: {sorted(dims)}")
        encs = {p.encoder_id for p in self.prototypes.values()}
        if len(encs) > 1 or (encs and encs != {self.encoder_id}):
            raise ValueError("all prototypes must share the set's encoder_id")

    def __len__(self) -> int:
        return len(self.prototypes)

    @property
    def object_ids(self) -> list[str]:
        return list(self.prototypes.keys())

    @property
    def dim(self) -> int | None:
        for p in self.prototypes.values():
            return int(p.vector.shape[0])
        return None

    def matrix(self) -> np.ndarray:
        """Prototype vectors stacked in object_ids order, (N, D) float32."""
        return np.stack([p.vector for p in self.prototypes.values()])


def render_config_digest(config: RenderConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def build_prototype(
    mesh: Mesh,
    viewpoints: list[ViewpointSpec],
    encoder: Encoder,
    render_cfg: RenderConfig = RenderConfig(),
    workers: int | None = None,
    normalize_views: bool = False,
) -> Prototype:
    """Render each viewpoint, encode, and average into one prototype.

    The default is the plain arithmetic mean of raw view embeddings
    (cosine classification normalizes later); ``normalize_views`` switches
    to the mean of L2-normalized embeddings for experimentation. The mean
    is accumulated in float64 and stored as float32.
    """
    if len(viewpoints) < 1:
        raise InvalidStrategy("need at least one viewpoint to build a prototype")
    renders = render_batch(mesh, viewpoints, render_cfg, workers=workers)
    embeddings = encoder.encode([r.pixels for r in renders]).astype(np.float64)
    if normalize_views:
        norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        embeddings = embeddings / norms
    mean = embeddings.mean(axis=0).astype(np.float32)
    return Prototype(
        object_id=mesh.object_id,
        vector=mean,
        K=len(viewpoints),
        viewpoints=tuple(viewpoints),
        encoder_id=encoder.encoder_id,
    )


def _object_seed(base_seed: int, object_id: str) -> int:
    blob = f"{base_seed}:{object_id}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


def build_set(
    meshes: list[Mesh],
    strategy: SamplingStrategy,
    encoder: Encoder,
    render_cfg: RenderConfig = RenderConfig(),
    set_id: str | None = None,
    workers: int | None = None,
    normalize_views: bool = False,
) -> ClassificationSet:
    """Build one prototype per mesh under the given sampling strategy.

    Random strategies draw an independent viewpoint sample per object,
    seeded from (strategy.seed, object_id) so the result is deterministic
    and independent of object order. Raises :class:`DuplicateObjectId`.
    """
    ids = [m.object_id for m in meshes]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise DuplicateObjectId(f"duplicate object ids: {sorted(dupes)}")
    prototypes = {}
    for mesh in meshes:
        if strategy.mode == "random":
            views = sample_viewpoints(strategy, seed=_object_seed(strategy.seed, mesh.object_id))
        else:
            views = sample_viewpoints(strategy)
        prototypes[mesh.object_id] = build_prototype(
            mesh, views, encoder, render_cfg, workers=workers, normalize_views=normalize_views
        )
    return ClassificationSet(
        set_id=set_id or f"set-{strategy.label()}-n{strategy.n_views}",
        prototypes=prototypes,
        encoder_id=encoder.encoder_id,
        render_config_digest=render_config_digest(render_cfg),
    )


def save_set(s: ClassificationSet, path: str | Path) -> Path:
    """Serialize a set: magic, JSON header, float32 body, SHA-256 trailer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": SET_FORMAT_VERSION,
        "set_id": s.set_id,
        "encoder_id": s.encoder_id,
        "render_config_digest": s.render_config_digest,
        "created_at": s.created_at,
        "dim": s.dim,
        "objects": [
            {
                "object_id": p.object_id,
                "K": p.K,
                "viewpoints": [
                    [vp.azimuth_deg, vp.elevation_deg, vp.inplane_deg] for vp in p.viewpoints
                ],
            }
            for p in s.prototypes.values()
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    if len(s.prototypes) > 0:
        body = np.ascontiguousarray(s.matrix(), dtype="<f4").tobytes()
    else:
        body = b""
    digest = hashlib.sha256(header_bytes + body).digest()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(body)
        fh.write(digest)
    return path


def load_set(source: str | Path | bytes) -> ClassificationSet:
    """Load a set file (or raw bytes), verifying its digest.

    Sets are self-describing: no encoder is needed to load one. Raises
    ``FileNotFoundError``, :class:`DigestMismatch` on corruption or
    truncation, and :class:`VersionMismatch` on a newer format version.
    """
    if isinstance(source, bytes):
        raw = source
        name = "<bytes>"
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(path)
        raw = path.read_bytes()
        name = str(path)
    if len(raw) < len(_MAGIC) + 4 + 32 or not raw.startswith(_MAGIC):
        raise DigestMismatch(f"{name}: not a prototype-set file")
    offset = len(_MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if len(raw) < offset + header_len + 32:
        raise DigestMismatch(f"{name}: truncated header")
    header_bytes = raw[offset : offset + header_len]
    offset += header_len
    body = raw[offset:-32]
    digest = raw[-32:]
    if hashlib.sha256(header_bytes + body).digest() != digest:
        raise DigestMismatch(f"{name}: digest mismatch (corrupt or truncated)")
    try:
        header = json.loads(header_bytes)
    except json.JSONDecodeError as exc:
        raise DigestMismatch(f"{name}: unreadable header") from exc
    version = header.get("format_version")
    if not isinstance(version, int) or version > SET_FORMAT_VERSION:
        raise VersionMismatch(f"{name}: format {version!r} newer than {SET_FORMAT_VERSION}")
    objects = header["objects"]
    dim = header["dim"]
    if objects:
        expected = len(objects) * dim * 4
        if len(body) != expected:
            raise DigestMismatch(f"{name}: body size {len(body)} != expected {expected}")
        vectors = np.frombuffer(body, dtype="<f4").reshape(len(objects), dim)
    else:
        vectors = np.zeros((0, 0), dtype=np.float32)
    prototypes = {}
    for row, obj in zip(vectors, objects):
        prototypes[obj["object_id"]] = Prototype(
            object_id=obj["object_id"],
            vector=row.copy(),
            K=obj["K"],
            viewpoints=tuple(
                ViewpointSpec(azimuth_deg=az, elevation_deg=el, inplane_deg=ip)
                for az, el, ip in obj["viewpoints"]
            ),
            encoder_id=header["encoder_id"],
        )
    return ClassificationSet(
        set_id=header["set_id"],
        prototypes=prototypes,
        encoder_id=header["encoder_id"],
        render_config_digest=header.get("render_config_digest", ""),
        created_at=header.get("created_at", 0.0),
    )
