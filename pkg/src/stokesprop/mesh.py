"""Closed triangulated surfaces: generation, STL input/output and geometry."""
from __future__ import annotations

import hashlib
import re
import struct
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateMeshError, MalformedMeshError, TopologyError, ValidationError

DEGENERATE_AREA_RATIO = 1e-12


def _sha256(text_or_bytes) -> str:
    if isinstance(text_or_bytes, str):
        text_or_bytes = text_or_bytes.encode("utf-8")
    return hashlib.sha256(text_or_bytes).hexdigest()


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed, consistently oriented triangle surface.

    Normals point out of the body. Construction validates closedness,
    orientation (every directed edge has exactly one reverse partner),
    panel areas and the sign of the enclosed volume.

    Parameters
    ----------
    vertices : (nv, 3) array_like
    triangles : (nt, 3) array_like of int
    digest : str
        Hex SHA-256 identifying where the mesh came from (STL bytes or
        generator parameters). Defaults to a hash of the arrays.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    digest: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise ValidationError(f"triangles must have shape (m, 3), got {t.shape}")
        if t.min() < 0 or t.max() >= len(v):
            raise ValidationError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite vertex coordinates")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if not self.digest:
            object.__setattr__(self, "digest", _sha256(v.tobytes() + t.tobytes()))
        self._validate()

    def _validate(self):
        areas = self.areas
        mean = areas.mean()
        bad = np.flatnonzero(areas <= DEGENERATE_AREA_RATIO * mean)
        if len(bad):
            raise DegenerateMeshError(
                f"{len(bad)} degenerate triangle(s), first indices {bad[:10].tolist()}")
        boundary, nonmanifold, misoriented = _edge_defects(self.triangles, len(self.vertices))
        if len(boundary):
            raise TopologyError("surface is not closed; boundary edges", boundary)
        if len(nonmanifold):
            raise TopologyError("non-manifold edges", nonmanifold)
        if len(misoriented):
            raise TopologyError("inconsistent triangle orientation across edges", misoriented)
        if self.volume <= 0:
            raise TopologyError("normals point into the body (signed volume <= 0)")

    @property
    def n_panels(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(nt, 3, 3) corner coordinates per panel."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        p = self.corners
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def volume(self) -> float:
        # (1/3) sum x.n dA; x.n is constant on a flat panel so the centroid rule is exact.
        return float(np.einsum("ij,ij,i->", self.centroids, self.normals, self.areas) / 3.0)

    @cached_property
    def bounding_radius(self) -> float:
        """Largest vertex distance from the volume centroid."""
        return float(np.linalg.norm(self.vertices - mass_properties(self)[1], axis=1).max())

    def transformed(self, rotation=None, shift=None) -> "TriMesh":
        """Return ``rotation @ x + shift`` applied to every vertex."""
        v = self.vertices
        if rotation is not None:
            rotation = np.asarray(rotation, dtype=float)
            if np.linalg.det(rotation) <= 0:
                raise ValidationError("rotation must be proper orthogonal")
            v = v @ rotation.T
        if shift is not None:
            v = v + np.asarray(shift, dtype=float)
        return TriMesh(v, self.triangles)


def _edge_defects(triangles, n_vertices):
    """Classify edges of a triangle list.

    Returns (boundary, nonmanifold, misoriented) arrays of undirected edges.
    """
    t = np.asarray(triangles, dtype=np.int64)
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    lo = directed.min(axis=1)
    hi = directed.max(axis=1)
    key = lo * n_vertices + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    undirected = np.stack([uniq // n_vertices, uniq % n_vertices], axis=1)
    boundary = undirected[counts == 1]
    nonmanifold = undirected[counts > 2]
    # for a well-oriented pair, one copy runs lo->hi and the other hi->lo
    forward = (directed[:, 0] == lo).astype(np.int64)
    n_forward = np.bincount(inverse, weights=forward, minlength=len(uniq))
    misoriented = undirected[(counts == 2) & (n_forward != 1)]
    return boundary, nonmanifold, misoriented


# --------------------------------------------------------------------------
# generators

_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def _unit_icosphere(subdivisions: int):
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = _ICO_FACES.copy()
    for _ in range(subdivisions):
        nv = len(v)
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1)[:, None]
        v = np.vstack([v, mid])
        m = len(f)
        ab, bc, ca = (nv + inverse[:m], nv + inverse[m:2 * m], nv + inverse[2 * m:])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        f = np.concatenate([
            np.stack([a, ab, ca], axis=1),
            np.stack([b, bc, ab], axis=1),
            np.stack([c, ca, bc], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ])
    return v, f


def _check_subdivisions(subdivisions):
    if int(subdivisions) != subdivisions or subdivisions < 0:
        raise ValidationError(f"subdivisions must be a non-negative integer, got {subdivisions!r}")
    return int(subdivisions)


def icosphere(radius: float, subdivisions: int) -> TriMesh:
    """Sphere of the given radius centred at the origin.

    Built by repeated 4-way splitting of an icosahedron with midpoint
    projection onto the sphere; ``10 * 4**subdivisions + 2`` vertices.
    """
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius!r}")
    n = _check_subdivisions(subdivisions)
    v, f = _unit_icosphere(n)
    return TriMesh(radius * v, f, digest=_sha256(f"icosphere(radius={float(radius)!r},subdivisions={n})"))


def ellipsoid(semi_axes, subdivisions: int) -> TriMesh:
    """Axis-aligned ellipsoid: a unit icosphere scaled by ``semi_axes``."""
    axes = np.asarray(semi_axes, dtype=float)
    if axes.shape != (3,) or not np.all(axes > 0):
        raise ValidationError(f"semi_axes must be three positive lengths, got {semi_axes!r}")
    n = _check_subdivisions(subdivisions)
    if np.all(axes == axes[0]):
        return icosphere(axes[0], n)
    v, f = _unit_icosphere(n)
    tag = ",".join(repr(float(a)) for a in axes)
    return TriMesh(v * axes, f, digest=_sha256(f"ellipsoid(semi_axes=({tag}),subdivisions={n})"))


# --------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class GeometryReport:
    area: float
    volume: float
    centroid: np.ndarray
    max_panel_aspect: float

    def to_dict(self):
        return {"area": self.area, "volume": self.volume,
                "centroid": [float(x) for x in self.centroid],
                "max_panel_aspect": self.max_panel_aspect}


def panel_aspect_ratios(mesh: TriMesh) -> np.ndarray:
    """Longest edge times perimeter over 4*sqrt(3)*area; 1 for equilateral panels."""
    p = mesh.corners
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return lengths.max(axis=1) * lengths.sum(axis=1) / (4.0 * np.sqrt(3.0) * mesh.areas)


def geometry_report(mesh: TriMesh) -> GeometryReport:
    """Surface area, enclosed volume, area-weighted centroid, worst panel aspect."""
    centroid = (mesh.centroids * mesh.areas[:, None]).sum(axis=0) / mesh.area
    return GeometryReport(
        area=mesh.area,
        volume=mesh.volume,
        centroid=centroid,
        max_panel_aspect=float(panel_aspect_ratios(mesh).max()),
    )


def vertex_rule_volume(mesh: TriMesh) -> float:
    """Volume from (1/3) sum x.n dA with x averaged over the panel corners
    instead of the centroid; a second quadrature of the same integral."""
    p = mesh.corners
    xn = np.einsum("ikj,ij->ik", p, mesh.normals).mean(axis=1)
    return float((xn * mesh.areas).sum() / 3.0)


def mass_properties(mesh: TriMesh, density: float = 1.0):
    """Mass, centre of mass and inertia tensor (about the centre of mass)
    of the solid enclosed by ``mesh`` at uniform ``density``.

    Uses the signed tetrahedra spanned by the origin and each panel.
    """
    p = mesh.corners
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    volume = vol.sum()
    center = (vol[:, None] * (a + b + c)).sum(axis=0) / (4.0 * volume)
    s = a + b + c
    second = (np.einsum("i,ij,ik->jk", vol, a, a) + np.einsum("i,ij,ik->jk", vol, b, b)
              + np.einsum("i,ij,ik->jk", vol, c, c) + np.einsum("i,ij,ik->jk", vol, s, s)) / 20.0
    second = density * second
    mass = density * volume
    inertia_origin = np.trace(second) * np.eye(3) - second
    shift = mass * (center @ center * np.eye(3) - np.outer(center, center))
    return float(mass), center, inertia_origin - shift


# --------------------------------------------------------------------------
# STL

def write_stl(mesh: TriMesh, path, binary: bool = True, name: str = "body") -> None:
    path = Path(path)
    p = mesh.corners
    n = mesh.normals
    if binary:
        rec = np.zeros(len(p), dtype=np.dtype([
            ("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
        rec["normal"] = n
        rec["v"] = p
        header = name.encode("ascii", "replace")[:80].ljust(80, b" ")
        path.write_bytes(header + struct.pack("<I", len(p)) + rec.tobytes())
        return
    lines = [f"solid {name}"]
    for tri, nn in zip(p.tolist(), n.tolist()):
        lines.append(f"  facet normal {nn[0]!r} {nn[1]!r} {nn[2]!r}")
        lines.append("    outer loop")
        for x in tri:
            lines.append(f"      vertex {x[0]!r} {x[1]!r} {x[2]!r}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_binary_stl(data: bytes) -> np.ndarray:
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise MalformedMeshError(
            f"binary STL declares {count} facets ({expected} bytes) but file has {len(data)} bytes",
            offset=min(len(data), expected))
    rec = np.frombuffer(data, dtype=np.dtype([
        ("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]), count=count, offset=84)
    corners = rec["v"].astype(float)
    if not np.all(np.isfinite(corners)):
        bad = int(np.flatnonzero(~np.isfinite(corners).all(axis=(1, 2)))[0])
        raise MalformedMeshError("non-finite vertex coordinate", offset=84 + 50 * bad + 12)
    return corners


_TOKEN = re.compile(rb"\S+")


def _parse_ascii_stl(data: bytes) -> np.ndarray:
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(data)]
    pos = 0

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedMeshError("unexpected end of file", offset=len(data))
        tok, off = tokens[pos]
        if expected is not None and tok.lower() != expected:
            raise MalformedMeshError(
                f"expected {expected.decode()!r}, found {tok[:32].decode('latin-1')!r}", offset=off)
        pos += 1
        return tok, off

    def number():
        tok, off = take()
        try:
            value = float(tok)
        except ValueError:
            raise MalformedMeshError(f"invalid number {tok[:32].decode('latin-1')!r}", offset=off) from None
        if not np.isfinite(value):
            raise MalformedMeshError("non-finite number", offset=off)
        return value

    take(b"solid")
    # solid name is optional and may span several tokens
    while pos < len(tokens) and tokens[pos][0].lower() not in (b"facet", b"endsolid"):
        pos += 1
    corners = []
    while True:
        if pos >= len(tokens):
            raise MalformedMeshError("missing 'endsolid'", offset=len(data))
        tok, off = tokens[pos]
        if tok.lower() == b"endsolid":
            break
        take(b"facet")
        take(b"normal")
        for _ in range(3):
            number()
        take(b"outer")
        take(b"loop")
        tri = []
        for _ in range(3):
            take(b"vertex")
            tri.append([number(), number(), number()])
        take(b"endloop")
        take(b"endfacet")
        corners.append(tri)
    if not corners:
        raise MalformedMeshError("ASCII STL contains no facets", offset=tokens[pos][1])
    return np.array(corners, dtype=float)


def parse_stl_bytes(data: bytes) -> np.ndarray:
    """Return the (m, 3, 3) facet corners of binary or ASCII STL data."""
    if len(data) == 0:
        raise MalformedMeshError("empty file", offset=0)
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            if count == 0:
                raise MalformedMeshError("binary STL contains no facets", offset=80)
            return _parse_binary_stl(data)
    if data.lstrip()[:5].lower() == b"solid":
        return _parse_ascii_stl(data)
    if len(data) < 84:
        raise MalformedMeshError("file too short for a binary STL header", offset=len(data))
    return _parse_binary_stl(data)


def _orient_consistently(triangles: np.ndarray, n_vertices: int) -> np.ndarray:
    """Flip triangles so that neighbours traverse shared edges oppositely."""
    t = triangles.copy()
    edge_map = {}
    for i, (a, b, c) in enumerate(t):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map.setdefault((min(u, v), max(u, v)), []).append(i)
    boundary = [e for e, tris in edge_map.items() if len(tris) == 1]
    if boundary:
        raise TopologyError("surface is not closed; boundary edges", boundary)
    nonmanifold = [e for e, tris in edge_map.items() if len(tris) > 2]
    if nonmanifold:
        raise TopologyError("non-manifold edges", nonmanifold)

    def has_directed(tri, u, v):
        a, b, c = tri
        return (a, b) == (u, v) or (b, c) == (u, v) or (c, a) == (u, v)

    done = np.zeros(len(t), dtype=bool)
    for seed in range(len(t)):
        if done[seed]:
            continue
        done[seed] = True
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            a, b, c = t[i]
            for u, v in ((a, b), (b, c), (c, a)):
                for j in edge_map[(min(u, v), max(u, v))]:
                    if j == i:
                        continue
                    same = has_directed(t[j], u, v)
                    if not done[j]:
                        if same:
                            t[j] = t[j][::-1]
                        done[j] = True
                        queue.append(j)
                    elif same:
                        raise TopologyError("surface is not orientable near edge", [(u, v)])
    return t


def _component_labels(triangles: np.ndarray, n_vertices: int) -> np.ndarray:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    m = len(triangles)
    rows = np.repeat(np.arange(m), 3)
    graph = coo_matrix((np.ones(3 * m), (rows, triangles.reshape(-1))), shape=(m, n_vertices)).tocsr()
    _, labels = connected_components(graph @ graph.T, directed=False)
    return labels


def mesh_from_corners(corners: np.ndarray, digest: str = "") -> TriMesh:
    """Weld exactly coincident corners, repair orientation and build a TriMesh."""
    flat = corners.reshape(-1, 3)
    vertices, inverse = np.unique(flat, axis=0, return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int64)
    repeated = (triangles[:, 0] == triangles[:, 1]) | (triangles[:, 1] == triangles[:, 2]) \
        | (triangles[:, 2] == triangles[:, 0])
    if repeated.any():
        raise DegenerateMeshError(
            f"{int(repeated.sum())} degenerate triangle(s) with coincident corners, "
            f"first indices {np.flatnonzero(repeated)[:10].tolist()}")
    p = vertices[triangles]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    bad = np.flatnonzero(areas <= DEGENERATE_AREA_RATIO * areas.mean())
    if len(bad):
        raise DegenerateMeshError(f"{len(bad)} degenerate triangle(s), first indices {bad[:10].tolist()}")
    triangles = _orient_consistently(triangles, len(vertices))
    labels = _component_labels(triangles, len(vertices))
    p = vertices[triangles]
    signed = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))
    for lab in np.unique(labels):
        sel = labels == lab
        if signed[sel].sum() < 0:
            triangles[sel] = triangles[sel][:, ::-1]
    return TriMesh(vertices, triangles, digest=digest)


def load_stl(path) -> TriMesh:
    """Read a binary or ASCII STL file into a validated TriMesh.

    Coincident corners are welded bit-exactly and facet orientation is
    repaired so that the enclosed volume is positive.

    Raises
    ------
    MalformedMeshError
        Unparseable bytes; carries the byte offset.
    TopologyError
        Open or non-manifold surface; lists the offending edges.
    DegenerateMeshError
        Panels with (near-)zero area.
    """
    data = Path(path).read_bytes()
    corners = parse_stl_bytes(data)
    return mesh_from_corners(corners, digest=_sha256(data))
