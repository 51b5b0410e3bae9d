"""CAD mesh loading, canonical normalization, and viewpoint math.

Meshes are loaded from STL (binary or ASCII) or OBJ files and brought into a
canonical frame: the bounding-box center sits at the origin and the bounding
sphere (centered there) has radius 1. Viewpoints are (azimuth, elevation,
in-plane) angle triples on the camera sphere; the regular grids used for
prototype construction and the 30-degree neighbor shifts used to form
contrastive positives both live here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateMesh, InvalidGrid, ParseError

__all__ = [
    "Mesh",
    "ViewpointSpec",
    "ViewGrid",
    "load_mesh",
    "normalize_mesh",
    "save_stl",
    "expand_grid",
    "neighbor_view",
]


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh in the canonical frame (unit bounding sphere at origin)."""

    object_id: str
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int64 indices into vertices
    source_path: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise DegenerateMesh(f"{self.object_id}: vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise DegenerateMesh(f"{self.object_id}: faces must be (F, 3)")
        if len(v) < 4:
            raise DegenerateMesh(f"{self.object_id}: mesh has {len(v)} vertices, need >= 4")
        if len(f) < 1:
            raise DegenerateMesh(f"{self.object_id}: mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise DegenerateMesh(f"{self.object_id}: face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def bbox_center(self) -> np.ndarray:
        return 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))

    @property
    def bounding_radius(self) -> float:
        """Max vertex distance from the bounding-box center."""
        d = np.linalg.norm(self.vertices - self.bbox_center, axis=1)
        return float(d.max())


@dataclass(frozen=True)
class ViewpointSpec:
    """Camera angles: azimuth in [0, 360), elevation in [0, 90], roll in [0, 360)."""

    azimuth_deg: float
    elevation_deg: float
    inplane_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "azimuth_deg", float(self.azimuth_deg) % 360.0)
        object.__setattr__(self, "elevation_deg", float(min(90.0, max(0.0, self.elevation_deg))))
        object.__setattr__(self, "inplane_deg", float(self.inplane_deg) % 360.0)


@dataclass(frozen=True)
class ViewGrid:
    """Regular viewpoint grid: all azimuth steps at each listed elevation."""

    elevations_deg: tuple = (30.0, 60.0)
    azimuth_step_deg: float = 30.0
    inplane_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "elevations_deg", tuple(float(e) for e in self.elevations_deg))


def load_mesh(path: str | Path, object_id: str | None = None) -> Mesh:
    """Load an STL or OBJ file and return a normalized :class:`Mesh`.

    The object id defaults to the file stem. Raises :class:`ParseError` on
    malformed files and :class:`DegenerateMesh` on meshes with fewer than 4
    vertices, no faces, or zero extent.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _parse_obj(raw, str(path))
    elif suffix == ".stl":
        vertices, faces = _parse_stl(raw, str(path))
    else:
        # Sniff: OBJ files are text with v/f records; otherwise try STL.
        try:
            vertices, faces = _parse_obj(raw, str(path))
        except ParseError:
            vertices, faces = _parse_stl(raw, str(path))
    mesh = Mesh(
        object_id=object_id or path.stem,
        vertices=vertices,
        faces=faces,
        source_path=str(path),
    )
    return normalize_mesh(mesh)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Translate the bounding-box center to the origin and scale the bounding
    sphere to radius 1. Idempotent. Raises :class:`DegenerateMesh` on zero
    extent."""
    center = mesh.bbox_center
    radius = mesh.bounding_radius
    if radius <= 0.0 or not np.isfinite(radius):
        raise DegenerateMesh(f"{mesh.object_id}: zero spatial extent")
    vertices = (mesh.vertices - center) / radius
    return replace(mesh, vertices=vertices)


def _parse_stl(raw: bytes, name: str):
    """Dispatch between ASCII and binary STL by the 84 + 50*n size rule."""
    if len(raw) < 15:
        raise ParseError(f"{name}: file too short for STL")
    is_binary = False
    if len(raw) >= 84:
        (n_tri,) = struct.unpack_from("<I", raw, 80)
        if len(raw) == 84 + 50 * n_tri and n_tri > 0:
            is_binary = True
    if not is_binary and raw.lstrip()[:5].lower() != b"solid":
        # No ASCII marker and no valid binary layout.
        if len(raw) >= 84:
            is_binary = True
        else:
            raise ParseError(f"{name}: not a recognizable STL file")
    if is_binary:
        return _parse_stl_binary(raw, name)
    return _parse_stl_ascii(raw, name)


def _parse_stl_binary(raw: bytes, name: str):
    (n_tri,) = struct.unpack_from("<I", raw, 80)
    if len(raw) < 84 + 50 * n_tri:
        raise ParseError(f"{name}: binary STL truncated ({n_tri} triangles declared)")
    if n_tri == 0:
        raise ParseError(f"{name}: binary STL declares zero triangles")
    # Each record: normal (3f), three vertices (9f), attribute count (H).
    data = np.frombuffer(raw, dtype=np.uint8, count=50 * n_tri, offset=84)
    tris = data.reshape(n_tri, 50)[:, 12:48].copy().view("<f4").reshape(n_tri, 3, 3)
    return _index_triangle_soup(tris.astype(np.float64))


def _parse_stl_ascii(raw: bytes, name: str):
    try:
        text = raw.decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover - decode with replace cannot fail
        raise ParseError(f"{name}: undecodable STL text") from exc
    coords = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0].lower() == "vertex":
            if len(parts) < 4:
                raise ParseError(f"{name}:{lineno}: vertex record needs 3 coordinates")
            try:
                coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{name}:{lineno}: bad vertex coordinate") from exc
    if not coords or len(coords) % 3 != 0:
        raise ParseError(f"{name}: ASCII STL has {len(coords)} vertex records (need multiple of 3)")
    tris = np.asarray(coords, dtype=np.float64).reshape(-1, 3, 3)
    return _index_triangle_soup(tris)


def _index_triangle_soup(tris: np.ndarray):
    """Merge exactly-equal vertices of an (F, 3, 3) triangle soup into an
    indexed (vertices, faces) pair."""
    flat = tris.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3).astype(np.int64)
    # Drop degenerate triangles (repeated corner indices).
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[ok]
    if len(faces) == 0:
        raise ParseError("all triangles degenerate after vertex merge")
    return uniq, faces


def _parse_obj(raw: bytes, name: str):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{name}: not a text OBJ file") from exc
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    saw_record = False
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            saw_record = True
            if len(parts) < 4:
                raise ParseError(f"{name}:{lineno}: v record needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{name}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            saw_record = True
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise ParseError(f"{name}:{lineno}: bad face index {token!r}") from exc
                # OBJ indices are 1-based; negatives count from the end.
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            if len(idx) < 3:
                raise ParseError(f"{name}:{lineno}: face with fewer than 3 vertices")
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
        # All other record types (vn, vt, usemtl, o, g, s, ...) are ignored.
    if not saw_record:
        raise ParseError(f"{name}: no v/f records found")
    if not vertices:
        raise ParseError(f"{name}: OBJ has faces but no vertices")
    if not faces:
        # Structurally valid but geometrically unusable (e.g. a point cloud).
        raise DegenerateMesh(f"{name}: OBJ has no faces")
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(v):
        raise ParseError(f"{name}: face index out of range")
    return v, f


def save_stl(mesh: Mesh, path: str | Path) -> Path:
    """Write a mesh as binary STL (vertices as-is, no denormalization)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tri = mesh.vertices[mesh.faces].astype(np.float32)  # (F, 3, 3)
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    lengths[lengths < 1e-12] = 1.0
    normals = (normals / lengths).astype(np.float32)
    n = len(tri)
    records = np.zeros(n, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    records["n"] = normals
    records["v"] = tri
    with open(path, "wb") as fh:
        fh.write(b"printid".ljust(80, b"\0"))
        fh.write(struct.pack("<I", n))
        fh.write(records.tobytes())
    return path


def expand_grid(grid: ViewGrid) -> list[ViewpointSpec]:
    """Expand a :class:`ViewGrid` into its viewpoint list.

    Ordering is deterministic: elevations in listed order (outer), azimuths
    ascending from 0 (inner). Raises :class:`InvalidGrid` if the azimuth step
    does not divide 360 exactly.
    """
    step = float(grid.azimuth_step_deg)
    if step <= 0:
        raise InvalidGrid(f"azimuth step must be positive, got {step}")
    n_az = 360.0 / step
    if abs(n_az - round(n_az)) > 1e-9:
        raise InvalidGrid(f"azimuth step {step} does not divide 360")
    n_az = int(round(n_az))
    return [
        ViewpointSpec(azimuth_deg=i * step, elevation_deg=el, inplane_deg=grid.inplane_deg)
        for el in grid.elevations_deg
        for i in range(n_az)
    ]


def neighbor_view(
    v: ViewpointSpec,
    seed: int,
    shift_deg: float = 30.0,
    azimuth_probability: float = 0.5,
) -> ViewpointSpec:
    """Return a viewpoint shifted by exactly ``shift_deg`` in azimuth or
    elevation, with a fresh uniform in-plane rotation.

    The shifted axis and sign are drawn from ``seed`` (azimuth is picked with
    ``azimuth_probability``). Azimuth wraps modulo 360; an elevation shift
    that would leave [0, 90] flips its sign so the separation stays exact.
    Deterministic given ``(v, seed)``.
    """
    rng = np.random.default_rng(seed)
    axis_az = rng.random() < azimuth_probability
    sign = 1.0 if rng.random() < 0.5 else -1.0
    inplane = rng.uniform(0.0, 360.0)
    if axis_az:
        return ViewpointSpec(
            azimuth_deg=(v.azimuth_deg + sign * shift_deg) % 360.0,
            elevation_deg=v.elevation_deg,
            inplane_deg=inplane,
        )
    new_el = v.elevation_deg + sign * shift_deg
    if new_el < 0.0 or new_el > 90.0:
        new_el = v.elevation_deg - sign * shift_deg
    return ViewpointSpec(
        azimuth_deg=v.azimuth_deg,
        elevation_deg=new_el,
        inplane_deg=inplane,
    )
