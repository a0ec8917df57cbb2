"""Brick catalog, voxel-to-brick merging, interior filling and build analysis.

Layers are horizontal slabs of constant ``y``. A placement's footprint is
``(size_x, size_z)``; orientation 0 keeps a brick's long axis along ``x``
(the native LDraw orientation of 1xN and 2xN bricks), orientation 90 turns
it along ``z``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .color import DEFAULT_COLOR_CODE, STANDARD_PALETTE, Palette, cell_codes
from .errors import InvariantError, ParseError
from .grid import VoxelGrid

_SIX = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class Footprint:
    width: int
    depth: int
    part_id: str

    @property
    def area(self) -> int:
        return self.width * self.depth


class BrickCatalog:
    """Height-1 cuboid bricks, each ``width <= depth`` studs."""

    def __init__(self, footprints):
        fps = []
        for fp in footprints:
            if not isinstance(fp, Footprint):
                fp = Footprint(*fp)
            w, d = sorted((int(fp.width), int(fp.depth)))
            if w < 1:
                raise ValueError(f"footprint {fp} must have positive size")
            if not str(fp.part_id).strip():
                raise ValueError("part ids must be non-empty")
            fps.append(Footprint(w, d, str(fp.part_id).strip()))
        sizes = [(f.width, f.depth) for f in fps]
        if len(set(sizes)) != len(sizes):
            raise ValueError("catalog footprints must be unique")
        if len({f.part_id for f in fps}) != len(fps):
            raise ValueError("catalog part ids must be unique")
        if (1, 1) not in sizes:
            raise ValueError("catalog must contain a 1x1 brick")
        self.footprints = tuple(fps)
        self._by_part = {f.part_id: f for f in fps}
        self._by_size = {}
        for f in fps:
            self._by_size[(f.depth, f.width)] = (f.part_id, 0)
            if f.width != f.depth:
                self._by_size[(f.width, f.depth)] = (f.part_id, 90)

    def __len__(self):
        return len(self.footprints)

    def __contains__(self, part_id):
        return part_id in self._by_part

    def footprint(self, part_id: str) -> Footprint:
        return self._by_part[part_id]

    def lookup(self, size_x: int, size_z: int):
        """``(part_id, orientation)`` for an oriented footprint, or None."""
        return self._by_size.get((size_x, size_z))

    def oriented_size(self, part_id: str, orientation: int) -> tuple[int, int]:
        f = self._by_part[part_id]
        return (f.depth, f.width) if orientation == 0 else (f.width, f.depth)

    def candidates(self, layer: int, interlock: bool = True):
        """Oriented footprints ``(sx, sz, part_id, orientation)`` in trial order.

        Larger area first. Equal areas prefer the long axis along ``x`` on
        even layers and along ``z`` on odd layers (always ``x`` without
        interlock), then the part id.
        """
        preferred = 90 if interlock and layer % 2 else 0
        out = []
        for f in self.footprints:
            orients = (0,) if f.width == f.depth else (0, 90)
            for o in orients:
                sx, sz = (f.depth, f.width) if o == 0 else (f.width, f.depth)
                pref = 0 if (f.width == f.depth or o == preferred) else 1
                out.append(((-f.area, pref, f.part_id, o), (sx, sz, f.part_id, o)))
        out.sort(key=lambda t: t[0])
        return [c for _, c in out]


STANDARD_CATALOG = BrickCatalog([
    Footprint(1, 1, "3005"),
    Footprint(1, 2, "3004"),
    Footprint(1, 3, "3622"),
    Footprint(1, 4, "3010"),
    Footprint(1, 6, "3009"),
    Footprint(1, 8, "3008"),
    Footprint(2, 2, "3003"),
    Footprint(2, 3, "3002"),
    Footprint(2, 4, "3001"),
    Footprint(2, 6, "2456"),
    Footprint(2, 8, "3007"),
])


def parse_catalog(data, source=None) -> BrickCatalog:
    """Parse catalog lines ``width depth part_id``."""
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8", errors="replace")
    fps = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 3:
            raise ParseError("expected 'width depth part_id'", lineno, source)
        try:
            w, d = int(toks[0]), int(toks[1])
        except ValueError:
            raise ParseError("width and depth must be integers", lineno, source) from None
        if w < 1 or d < 1 or w > 64 or d > 64:
            raise ParseError("footprint sizes must be 1-64", lineno, source)
        fps.append(Footprint(w, d, toks[2].removesuffix(".dat")))
    try:
        return BrickCatalog(fps)
    except ValueError as exc:
        raise ParseError(str(exc), 1, source) from None


def load_catalog(path) -> BrickCatalog:
    path = Path(path)
    return parse_catalog(path.read_bytes(), source=str(path))


@dataclass(frozen=True, order=True)
class BrickPlacement:
    """One brick: min-corner cell, oriented footprint, part and LDraw color."""

    origin: tuple[int, int, int]
    size: tuple[int, int]
    orientation: int
    part_id: str
    color_code: int

    @property
    def layer(self) -> int:
        return self.origin[1]

    def cells(self):
        x0, y, z0 = self.origin
        sx, sz = self.size
        return [(x, y, z) for z in range(z0, z0 + sz) for x in range(x0, x0 + sx)]


@dataclass(frozen=True)
class BrickModel:
    placements: tuple[BrickPlacement, ...]
    grid_dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))
        object.__setattr__(self, "grid_dims", tuple(int(d) for d in self.grid_dims))

    def __len__(self):
        return len(self.placements)

    def layers(self) -> list[list[BrickPlacement]]:
        """Non-empty layers bottom-up, placements in model order."""
        by_y = {}
        for p in self.placements:
            by_y.setdefault(p.layer, []).append(p)
        return [by_y[y] for y in sorted(by_y)]


def coverage(model: BrickModel) -> np.ndarray:
    """Number of bricks covering each cell."""
    counts = np.zeros(model.grid_dims, dtype=np.int64)
    nx, ny, nz = model.grid_dims
    for p in model.placements:
        x0, y, z0 = p.origin
        sx, sz = p.size
        if x0 < 0 or z0 < 0 or not 0 <= y < ny or x0 + sx > nx or z0 + sz > nz:
            raise InvariantError(f"placement {p} leaves grid {model.grid_dims}")
        counts[x0:x0 + sx, y, z0:z0 + sz] += 1
    return counts


def rasterize(model: BrickModel, palette: Palette | None = None) -> VoxelGrid:
    """Voxel grid of the cells covered by a model, colored when ``palette`` is given."""
    occ = coverage(model) > 0
    if palette is None:
        return VoxelGrid(occ)
    col = np.zeros(model.grid_dims + (3,))
    for p in model.placements:
        x0, y, z0 = p.origin
        sx, sz = p.size
        col[x0:x0 + sx, y, z0:z0 + sz] = palette.rgb_of(p.color_code)
    return VoxelGrid(occ, col)


def validate_model(model: BrickModel, catalog: BrickCatalog = STANDARD_CATALOG):
    """Raise InvariantError unless placements are in-bounds, disjoint and in the catalog."""
    if coverage(model).max(initial=0) > 1:
        raise InvariantError("placements overlap")
    last_y = -1
    for p in model.placements:
        if p.part_id not in catalog:
            raise InvariantError(f"part {p.part_id} not in catalog")
        if catalog.oriented_size(p.part_id, p.orientation) != tuple(p.size):
            raise InvariantError(f"placement {p} does not match catalog footprint")
        if p.layer < last_y:
            raise InvariantError("placements are not ordered bottom layer first")
        last_y = p.layer


def _shift_min(owner, frontier, sentinel):
    """For each cell, the minimum owner among 6-neighbors in ``frontier``."""
    src = np.where(frontier, owner, sentinel)
    best = np.full(owner.shape, sentinel, dtype=owner.dtype)
    for ax in range(3):
        n = owner.shape[ax]
        if n < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        np.minimum(best[lo], src[hi], out=best[lo])
        np.minimum(best[hi], src[lo], out=best[hi])
    return best


def exterior_mask(occupancy: np.ndarray) -> np.ndarray:
    """Empty cells 6-connected to the grid boundary through empty cells."""
    empty = ~occupancy
    labels, _ = ndimage.label(empty, structure=_SIX)
    faces = np.concatenate([
        labels[0].ravel(), labels[-1].ravel(),
        labels[:, 0].ravel(), labels[:, -1].ravel(),
        labels[:, :, 0].ravel(), labels[:, :, -1].ravel(),
    ])
    outside = np.unique(faces[faces > 0])
    return np.isin(labels, outside)


def fill_interior(grid: VoxelGrid) -> VoxelGrid:
    """Fill every empty cell that cannot reach the grid boundary.

    New cells take the color of the nearest original filled cell, measured
    by breadth-first steps through the cavity; equal distances resolve to
    the source with the lowest linear index.
    """
    occ = grid.occupancy
    cavity = ~occ & ~exterior_mask(occ)
    if not cavity.any():
        return grid
    filled = occ | cavity
    if grid.color is None:
        return VoxelGrid(filled)

    nx, ny, nz = grid.dims
    sentinel = np.iinfo(np.int64).max
    lin = np.arange(nx * ny * nz, dtype=np.int64).reshape(grid.dims, order="F")
    owner = np.where(occ, lin, sentinel)
    frontier = occ.copy()
    todo = cavity.copy()
    while todo.any():
        best = _shift_min(owner, frontier, sentinel)
        new = todo & (best < sentinel)
        if not new.any():
            raise InvariantError("cavity cell unreachable from any filled cell")
        owner[new] = best[new]
        todo &= ~new
        frontier = new

    col = np.array(grid.color)
    cx, cy, cz = np.nonzero(cavity)
    sx, sy, sz = np.unravel_index(owner[cx, cy, cz], grid.dims, order="F")
    col[cx, cy, cz] = grid.color[sx, sy, sz]
    return VoxelGrid(filled, col)


def merge_bricks(grid: VoxelGrid, catalog: BrickCatalog = STANDARD_CATALOG,
                 palette: Palette = STANDARD_PALETTE, interlock: bool = True,
                 default_color: int = DEFAULT_COLOR_CODE) -> BrickModel:
    """Cover the filled cells with catalog bricks, greedily, one layer at a time.

    Within a layer cells are visited ``z``-major then ``x``; at each uncovered
    filled cell the first candidate from :meth:`BrickCatalog.candidates` whose
    cells are all filled, uncovered and of one color is placed with its
    min-corner there. The 1x1 brick always fits, so the cover is exact.
    """
    codes = cell_codes(grid, palette, default_color)
    nx, ny, nz = grid.dims
    max_len = max(f.depth for f in catalog.footprints)
    placements = []
    for y in range(ny):
        layer = codes[:, y, :]
        if not (layer >= 0).any():
            continue
        av = layer.T.tolist()  # av[z][x]; -1 means empty or already covered
        cands = catalog.candidates(y, interlock)
        for z in range(nz):
            row = av[z]
            for x in range(nx):
                c = row[x]
                if c < 0:
                    continue
                rx = 1
                while rx < max_len and x + rx < nx and row[x + rx] == c:
                    rx += 1
                rz = 1
                while rz < max_len and z + rz < nz and av[z + rz][x] == c:
                    rz += 1
                for sx, sz, part, orient in cands:
                    if sx > rx or sz > rz:
                        continue
                    if all(av[z + j][x + i] == c for j in range(1, sz) for i in range(1, sx)):
                        break
                else:
                    raise InvariantError(f"no catalog brick fits cell {(x, y, z)}")
                for j in range(sz):
                    r = av[z + j]
                    for i in range(sx):
                        r[x + i] = -1
                placements.append(BrickPlacement((x, y, z), (sx, sz), orient, part, int(c)))
    return BrickModel(tuple(placements), grid.dims)


@dataclass
class ConnectivityReport:
    n_components: int
    components: list  # lists of placement indices, ordered by first index
    floating: list  # indices into ``components`` with no brick on layer 0
    layer_counts: list  # bricks per layer, length ny

    @property
    def fully_connected(self) -> bool:
        return self.n_components <= 1

    def summary(self) -> dict:
        return {
            "components": self.n_components,
            "floating_components": len(self.floating),
            "floating_bricks": sum(len(self.components[i]) for i in self.floating),
            "layer_counts": list(self.layer_counts),
        }


def analyze_connectivity(model: BrickModel) -> ConnectivityReport:
    """Connected components of the stud-contact graph.

    Two bricks are joined when one covers a cell directly above a cell
    covered by the other.
    """
    ny = model.grid_dims[1]
    layer_counts = [0] * ny
    for p in model.placements:
        layer_counts[p.layer] += 1
    n = len(model.placements)
    if n == 0:
        return ConnectivityReport(0, [], [], layer_counts)
    owner = np.full(model.grid_dims, -1, dtype=np.int64)
    for i, p in enumerate(model.placements):
        x0, y, z0 = p.origin
        sx, sz = p.size
        owner[x0:x0 + sx, y, z0:z0 + sz] = i
    below = owner[:, :-1, :]
    above = owner[:, 1:, :]
    touch = (below >= 0) & (above >= 0)
    rows, cols = below[touch], above[touch]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    groups = {}
    for i, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(i)
    components = sorted(groups.values(), key=lambda g: g[0])
    floating = [ci for ci, comp in enumerate(components)
                if not any(model.placements[i].layer == 0 for i in comp)]
    return ConnectivityReport(n_comp, components, floating, layer_counts)


def bill_of_materials(model: BrickModel) -> list[tuple[str, int, int]]:
    """``(part_id, color_code, count)`` rows sorted by part then color."""
    counts = Counter((p.part_id, p.color_code) for p in model.placements)
    return [(part, code, n) for (part, code), n in sorted(counts.items())]


def write_bricks(model: BrickModel) -> str:
    nx, ny, nz = model.grid_dims
    lines = ["BRICKS 1", f"dims {nx} {ny} {nz}"]
    for p in model.placements:
        x, y, z = p.origin
        lines.append(f"{x} {y} {z} {p.size[0]} {p.size[1]} {p.orientation} {p.part_id} {p.color_code}")
    return "\n".join(lines) + "\n"


def read_bricks(data, source=None) -> BrickModel:
    """Parse a ``BRICKS 1`` dump."""
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8", errors="replace")
    lines = data.splitlines()
    if not lines or lines[0].split() != ["BRICKS", "1"]:
        raise ParseError("expected 'BRICKS 1' header", 1, source)
    toks = lines[1].split() if len(lines) > 1 else []
    if len(toks) != 4 or toks[0] != "dims":
        raise ParseError("expected 'dims nx ny nz'", 2, source)
    try:
        dims = tuple(int(t) for t in toks[1:])
    except ValueError:
        raise ParseError("dims must be integers", 2, source) from None
    if min(dims) < 1:
        raise ParseError("dims must be positive", 2, source)
    placements = []
    for idx in range(2, len(lines)):
        toks = lines[idx].split()
        if not toks:
            continue
        if len(toks) != 8:
            raise ParseError(f"expected 8 fields, got {len(toks)}", idx + 1, source)
        try:
            x, y, z, w, d, o = (int(t) for t in toks[:6])
            code = int(toks[7])
        except ValueError:
            raise ParseError("numeric field expected", idx + 1, source) from None
        if o not in (0, 90):
            raise ParseError(f"orientation must be 0 or 90, got {o}", idx + 1, source)
        if w < 1 or d < 1 or x < 0 or z < 0 or not 0 <= y < dims[1] or x + w > dims[0] or z + d > dims[2]:
            raise ParseError("placement outside grid", idx + 1, source)
        placements.append(BrickPlacement((x, y, z), (w, d), o, toks[6], code))
    return BrickModel(tuple(placements), dims)
