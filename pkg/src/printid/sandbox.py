"""Procedural primitive meshes for self-contained experiments and tests.

The ten-object sandbox catalog consists of surfaces of revolution with
strongly different silhouette profiles (ball, column, rod, triangle, donut,
disc, two balls, X, rhombus, stacked discs). Profiles of revolution survive
averaging over azimuth, which keeps pixel-space prototypes separable from
any azimuth — the property the sandbox oracle relies on. The parametric
generator adds boxy shapes and random stretches for toy training variety.
"""

from __future__ import annotations

import numpy as np

from .geometry import Mesh, normalize_mesh

__all__ = [
    "sandbox_meshes",
    "procedural_meshes",
    "primitive_catalog",
    "make_primitive",
]


def _mesh(object_id, vertices, faces) -> Mesh:
    return normalize_mesh(
        Mesh(
            object_id=object_id,
            vertices=np.asarray(vertices, dtype=np.float64),
            faces=np.asarray(faces, dtype=np.int64),
            source_path=f"procedural:{object_id}",
        )
    )


def _box(w=1.0, d=1.0, h=1.0):
    x, y, z = w / 2, d / 2, h / 2
    v = [
        [-x, -y, -z], [x, -y, -z], [x, y, -z], [-x, y, -z],
        [-x, -y, z], [x, -y, z], [x, y, z], [-x, y, z],
    ]
    f = [
        [0, 2, 1], [0, 3, 2],
        [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ]
    return v, f


def _tetrahedron():
    v = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return v, f


def _uv_sphere(n_lat=12, n_lon=18, radius=1.0):
    verts = [[0.0, 0.0, radius]]
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        for j in range(n_lon):
            theta = 2 * np.pi * j / n_lon
            verts.append(
                [
                    radius * np.sin(phi) * np.cos(theta),
                    radius * np.sin(phi) * np.sin(theta),
                    radius * np.cos(phi),
                ]
            )
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    faces = []
    for j in range(n_lon):
        faces.append([0, ring(1, j), ring(1, j + 1)])
        faces.append([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    return verts, faces


def _regular_outline(n_sides, radius=1.0):
    ang = 2 * np.pi * np.arange(n_sides) / n_sides
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def _extruded_polygon(outline, height):
    """Extrude a star-shaped 2D outline along z; caps fan from the centroid."""
    outline = np.asarray(outline, dtype=np.float64)
    n = len(outline)
    z0, z1 = -height / 2, height / 2
    verts = [[x, y, z0] for x, y in outline] + [[x, y, z1] for x, y in outline]
    centroid = outline.mean(axis=0)
    c0 = len(verts)
    verts.append([centroid[0], centroid[1], z0])
    c1 = len(verts)
    verts.append([centroid[0], centroid[1], z1])
    faces = []
    for j in range(n):
        k = (j + 1) % n
        faces.append([j, k, n + k])
        faces.append([j, n + k, n + j])
        faces.append([c0, k, j])
        faces.append([c1, n + j, n + k])
    return verts, faces


def _cylinder(n_seg=24, radius=0.62, height=1.9):
    return _extruded_polygon(_regular_outline(n_seg, radius), height)


def _cone(n_seg=24, radius=1.0, height=1.6):
    ring = _regular_outline(n_seg, radius)
    verts = [[x, y, -height / 2] for x, y in ring]
    apex = len(verts)
    verts.append([0.0, 0.0, height / 2])
    base = len(verts)
    verts.append([0.0, 0.0, -height / 2])
    faces = []
    for j in range(n_seg):
        k = (j + 1) % n_seg
        faces.append([j, k, apex])
        faces.append([base, k, j])
    return verts, faces


def _torus(major=0.7, minor=0.3, n_major=20, n_minor=12):
    verts = []
    for i in range(n_major):
        u = 2 * np.pi * i / n_major
        for j in range(n_minor):
            v = 2 * np.pi * j / n_minor
            r = major + minor * np.cos(v)
            verts.append([r * np.cos(u), r * np.sin(u), minor * np.sin(v)])
    idx = lambda i, j: (i % n_major) * n_minor + (j % n_minor)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b = idx(i, j), idx(i + 1, j)
            c, d = idx(i, j + 1), idx(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    return verts, faces


def _dumbbell(ball=0.45, gap=0.75, bar=0.14):
    vs: list = []
    fs: list = []

    def append(v, f):
        base = len(vs)
        vs.extend(np.asarray(v).tolist())
        fs.extend((np.asarray(f) + base).tolist())

    for zc in (-gap, gap):
        v, f = _uv_sphere(8, 12, radius=ball)
        append(np.asarray(v) + np.array([0.0, 0.0, zc]), f)
    v, f = _extruded_polygon(_regular_outline(10, bar), 2 * gap)
    append(v, f)
    return vs, fs


def _hourglass(radius=0.85, height=1.8, n_seg=18):
    """Two cones joined tip to tip at the origin."""
    ring = _regular_outline(n_seg, radius)
    vs = [[x, y, -height / 2] for x, y in ring]
    vs += [[x, y, height / 2] for x, y in ring]
    vs += [[0.0, 0.0, 0.0], [0.0, 0.0, -height / 2], [0.0, 0.0, height / 2]]
    mid, cb, ct = 2 * n_seg, 2 * n_seg + 1, 2 * n_seg + 2
    fs = []
    for j in range(n_seg):
        k = (j + 1) % n_seg
        fs += [[j, k, mid], [n_seg + k, n_seg + j, mid], [cb, k, j], [ct, n_seg + j, n_seg + k]]
    return vs, fs


def _bipyramid(radius=1.0, half_height=1.1, n_seg=12):
    ring = _regular_outline(n_seg, radius)
    vs = [[x, y, 0.0] for x, y in ring] + [[0.0, 0.0, half_height], [0.0, 0.0, -half_height]]
    fs = []
    for j in range(n_seg):
        k = (j + 1) % n_seg
        fs += [[j, k, n_seg], [k, j, n_seg + 1]]
    return vs, fs


def _cake(radii=(1.0, 0.66, 0.36), layer_height=0.45, n_seg=20):
    """Stacked discs of decreasing radius, wedding-cake style."""
    vs: list = []
    fs: list = []
    z = -len(radii) * layer_height / 2
    for r in radii:
        v, f = _extruded_polygon(_regular_outline(n_seg, r), layer_height)
        base = len(vs)
        vs.extend((np.asarray(v) + np.array([0.0, 0.0, z + layer_height / 2])).tolist())
        fs.extend((np.asarray(f) + base).tolist())
        z += layer_height
    return vs, fs


def _cross(arm=0.3, length=1.0, height=0.4):
    a, L = arm, length
    outline = [
        (a, a), (a, L), (-a, L), (-a, a), (-L, a), (-L, -a),
        (-a, -a), (-a, -L), (a, -L), (a, -a), (L, -a), (L, a),
    ]
    return _extruded_polygon(outline, height)


_CATALOG = [
    ("sphere", _uv_sphere),
    ("cylinder", _cylinder),
    ("rod", lambda: _extruded_polygon(_regular_outline(12, 0.16), 2.1)),
    ("cone", _cone),
    ("torus", _torus),
    ("puck", lambda: _extruded_polygon(_regular_outline(24, 1.0), 0.26)),
    ("dumbbell", _dumbbell),
    ("hourglass", _hourglass),
    ("diamond", _bipyramid),
    ("cake", _cake),
]

# Extra kinds for the parametric toy generator; not separable enough in raw
# pixel space to join the oracle catalog.
_EXTRA_KINDS = [
    ("cube", lambda: _box(1, 1, 1)),
    ("tetrahedron", _tetrahedron),
    ("cross", _cross),
    ("hex_prism", lambda: _extruded_polygon(_regular_outline(6, 1.0), 0.5)),
    ("slab", lambda: _box(2.0, 1.2, 0.15)),
]


def primitive_catalog() -> list[str]:
    """Names of the ten standard sandbox primitives."""
    return [name for name, _ in _CATALOG]


def make_primitive(name: str, object_id: str | None = None) -> Mesh:
    """Build one catalog primitive as a normalized mesh."""
    for cat_name, factory in _CATALOG + _EXTRA_KINDS:
        if cat_name == name:
            return _mesh(object_id or name, *factory())
    raise KeyError(f"unknown primitive {name!r}; choose from {primitive_catalog()}")


def sandbox_meshes(prefix: str = "") -> list[Mesh]:
    """The ten-object sandbox: one of each catalog primitive."""
    return [make_primitive(name, prefix + name) for name, _ in _CATALOG]


def procedural_meshes(n: int, seed: int, prefix: str = "toy") -> list[Mesh]:
    """Generate ``n`` varied toy meshes: a random primitive kind under a
    random anisotropic stretch and z rotation. Deterministic given ``seed``."""
    kinds = _CATALOG + _EXTRA_KINDS
    rng = np.random.default_rng(seed)
    meshes = []
    for i in range(n):
        name, factory = kinds[int(rng.integers(len(kinds)))]
        verts, faces = factory()
        verts = np.asarray(verts, dtype=np.float64) * rng.uniform(0.4, 1.0, size=3)
        angle = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        meshes.append(_mesh(f"{prefix}_{i:03d}_{name}", verts @ rot.T, faces))
    return meshes
