"""Triangle mesh parsing (OFF, OBJ), surface sampling and voxelization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError, InputError, ParseError
from .grid import VoxelGrid

DEFAULT_SAMPLES = 100_000
# Fraction of the unit cube left empty on each side after normalization.
MARGIN = 0.02


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float
    faces: np.ndarray  # (m, 3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InputError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (n, 3)
    colors: np.ndarray | None = None  # (n, 3) in [0, 1]

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        if self.colors is not None:
            c = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(p):
                raise InputError("colors must be parallel to points")
            object.__setattr__(self, "colors", c)

    def __len__(self):
        return len(self.points)


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return bytes(data).decode("utf-8", errors="replace")
    return data


def _float(tok, lineno, source):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno, source) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite coordinate {tok!r}", lineno, source)
    return v


def _fan(poly):
    """Fan-triangulate a polygon, dropping triangles with repeated vertices."""
    out = []
    for i in range(1, len(poly) - 1):
        tri = (poly[0], poly[i], poly[i + 1])
        if len(set(tri)) == 3:
            out.append(tri)
    return out


def parse_off(data, source=None) -> TriangleMesh:
    """Parse an OFF mesh; polygons are fan-triangulated.

    Accepts ``#`` comments, blank lines, and the ``OFFnv nf ne`` header
    glitch found in some ModelNet files.

    Raises:
        ParseError: naming the offending line.
    """
    # significant lines with original numbers
    rows = []
    for i, raw in enumerate(_text(data).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((i, line))
    if not rows:
        raise ParseError("empty file, expected 'OFF' header", 1, source)
    lineno, head = rows[0]
    if not head.startswith("OFF"):
        raise ParseError(f"expected 'OFF' header, got {head[:20]!r}", lineno, source)
    rest = head[3:].split()
    pos = 1
    if rest:
        counts_line, counts = lineno, rest
    else:
        if len(rows) < 2:
            raise ParseError("missing counts line", lineno + 1, source)
        counts_line, line = rows[1]
        counts = line.split()
        pos = 2
    if len(counts) not in (2, 3):
        raise ParseError("counts line must be 'nv nf [ne]'", counts_line, source)
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except ValueError:
        nv = nf = -1
    if nv < 0 or nf < 0:
        raise ParseError("vertex and face counts must be non-negative integers", counts_line, source)

    last = rows[-1][0]
    verts = []
    for k in range(nv):
        if pos >= len(rows):
            raise ParseError(f"missing vertex {k + 1} of {nv}", last + 1, source)
        lineno, line = rows[pos]
        toks = line.split()
        if len(toks) < 3:
            raise ParseError(f"vertex line needs 3 coordinates, got {len(toks)}", lineno, source)
        verts.append([_float(t, lineno, source) for t in toks[:3]])
        pos += 1

    faces = []
    for k in range(nf):
        if pos >= len(rows):
            raise ParseError(f"missing face {k + 1} of {nf}", last + 1, source)
        lineno, line = rows[pos]
        toks = line.split()
        try:
            n = int(toks[0])
            if n > len(toks):
                raise ValueError
            idx = [int(t) for t in toks[1:1 + n]]
        except ValueError:
            raise ParseError("face line must start with integer count and indices", lineno, source) from None
        if n < 3 or len(idx) != n:
            raise ParseError(f"face declares {n} vertices but lists {len(idx)}", lineno, source)
        for j in idx:
            if j < 0 or j >= nv:
                raise ParseError(f"vertex index {j} out of range [0, {nv})", lineno, source)
        faces.extend(_fan(idx))
        pos += 1
    if pos < len(rows):
        lineno, _ = rows[pos]
        raise ParseError(f"unexpected data after {nf} faces", lineno, source)
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _obj_index(tok, nverts, lineno, source):
    ref = tok.split("/", 1)[0]
    try:
        i = int(ref)
    except ValueError:
        raise ParseError(f"bad face vertex reference {tok!r}", lineno, source) from None
    if i > 0:
        j = i - 1
    elif i < 0:
        j = nverts + i
    else:
        raise ParseError("face index 0 is invalid in OBJ", lineno, source)
    if not 0 <= j < nverts:
        raise ParseError(f"face index {i} out of range for {nverts} vertices", lineno, source)
    return j


def parse_obj(data, source=None) -> TriangleMesh:
    """Parse the ``v``/``f`` subset of Wavefront OBJ.

    Texture/normal suffixes on face entries are ignored and negative indices
    count back from the current vertex total. Other record types are skipped.
    """
    verts = []
    faces = []
    for lineno, raw in enumerate(_text(data).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kind = toks[0]
        if kind == "v":
            if len(toks) < 4 or len(toks) > 7:
                raise ParseError(f"vertex record needs 3 coordinates, got {len(toks) - 1}", lineno, source)
            verts.append([_float(t, lineno, source) for t in toks[1:4]])
        elif kind == "f":
            if len(toks) < 4:
                raise ParseError(f"face record needs >= 3 vertices, got {len(toks) - 1}", lineno, source)
            poly = [_obj_index(t, len(verts), lineno, source) for t in toks[1:]]
            faces.extend(_fan(poly))
        elif kind in ("vt", "vn", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p"):
            continue
        else:
            raise ParseError(f"unknown record type {kind[:20]!r}", lineno, source)
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    data = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".off":
        return parse_off(data, source=str(path))
    if suffix == ".obj":
        return parse_obj(data, source=str(path))
    raise InputError(f"unsupported mesh format {suffix!r} for {path}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the sampling stream is fixed by the seed."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_surface(mesh: TriangleMesh, n: int = DEFAULT_SAMPLES, seed: int = 0) -> PointCloud:
    """Draw ``n`` points uniformly over the mesh surface.

    A triangle is chosen with probability proportional to its area, then a
    uniform point inside it via folded barycentric coordinates. Random draws
    come from one PCG64 stream in a fixed order: ``n`` triangle picks, then
    ``n`` pairs ``(u, v)``.

    Raises:
        GeometryError: if the total surface area is zero.
    """
    if n < 1:
        raise InputError("sample count must be >= 1")
    areas = mesh.areas()
    total = math.fsum(areas)
    if not total > 0.0 or not math.isfinite(total):
        raise GeometryError("mesh has zero (or non-finite) surface area")
    rng = make_rng(seed)
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    pick = np.searchsorted(cdf, rng.random(n), side="right")
    np.minimum(pick, len(areas) - 1, out=pick)
    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    tri = mesh.faces[pick]
    a = mesh.vertices[tri[:, 0]]
    b = mesh.vertices[tri[:, 1]]
    c = mesh.vertices[tri[:, 2]]
    pts = a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a)
    return PointCloud(pts)


def normalize_points(points: np.ndarray) -> np.ndarray:
    """Map points uniformly into the unit cube, centered, with a 2% margin."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    center = (lo + hi) / 2.0
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        return np.full(points.shape, 0.5)
    scale = (1.0 - 2.0 * MARGIN) / extent
    return 0.5 + (points - center) * scale


def voxelize(cloud: PointCloud, resolution: int) -> VoxelGrid:
    """Occupancy grid of side ``resolution`` from a point cloud.

    Cells are half-open ``[i, i+1)`` after scaling to ``resolution``; a
    coordinate equal to the upper bound is clamped into the last cell.
    Colored clouds yield the mean point color per filled cell.
    """
    if resolution < 1:
        raise InputError("resolution must be >= 1")
    if len(cloud) == 0:
        raise InputError("cannot voxelize an empty point cloud")
    if not np.all(np.isfinite(cloud.points)):
        raise InputError("point coordinates must be finite")
    unit = normalize_points(cloud.points)
    idx = np.floor(unit * resolution).astype(np.int64)
    np.clip(idx, 0, resolution - 1, out=idx)
    dims = (resolution,) * 3
    lin = np.ravel_multi_index(idx.T, dims, order="F")
    counts = np.bincount(lin, minlength=resolution**3)
    occ = (counts > 0).reshape(dims, order="F")
    if cloud.colors is None:
        return VoxelGrid(occ)
    col = np.zeros((resolution**3, 3))
    for ch in range(3):
        sums = np.bincount(lin, weights=cloud.colors[:, ch], minlength=resolution**3)
        np.divide(sums, counts, out=col[:, ch], where=counts > 0)
    return VoxelGrid(occ, np.clip(col, 0.0, 1.0).reshape(dims + (3,), order="F"))
